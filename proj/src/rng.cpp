#include "plmlab/rng.hpp"

#include <cmath>

namespace plmlab {

double Rng::next_normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    // Box-Muller; u clamped away from 0 so log stays finite.
    double u = next_uniform();
    if (u <= 0.0) u = 0x1.0p-53;
    const double v = next_uniform();
    const double r = std::sqrt(-2.0 * std::log(u));
    const double theta = 2.0 * M_PI * v;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
}

Matrix Rng::normal_matrix(std::size_t rows, std::size_t cols, double mean, double stddev) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i)
        m.storage()[i] = static_cast<float>(next_normal(mean, stddev));
    return m;
}

} // namespace plmlab
