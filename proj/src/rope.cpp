#include "plmlab/rope.hpp"

#include <cmath>
#include <stdexcept>

namespace plmlab {

void apply_rope_inplace(std::span<float> x, std::int64_t position, double theta_base) {
    if (x.size() % 2 != 0) throw std::invalid_argument("apply_rope: dimension must be even");
    const std::size_t d = x.size();
    for (std::size_t i = 0; i * 2 < d; ++i) {
        const double freq = std::pow(theta_base, -2.0 * static_cast<double>(i) / static_cast<double>(d));
        const double angle = static_cast<double>(position) * freq;
        const double c = std::cos(angle);
        const double s = std::sin(angle);
        const double a = x[2 * i];
        const double b = x[2 * i + 1];
        x[2 * i] = static_cast<float>(a * c - b * s);
        x[2 * i + 1] = static_cast<float>(a * s + b * c);
    }
}

Matrix apply_rope(const Matrix& x, std::span<const std::int64_t> positions, double theta_base) {
    if (positions.size() != x.rows())
        throw std::invalid_argument("apply_rope: one position per row required");
    Matrix out = x;
    for (std::size_t r = 0; r < out.rows(); ++r) apply_rope_inplace(out.row(r), positions[r], theta_base);
    return out;
}

} // namespace plmlab
