#include "plmlab/matrix.hpp"

#include <cmath>
#include <limits>
#include <thread>

namespace plmlab {

bool Matrix::all_finite() const {
    for (float v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

namespace {

void matmul_rows(const Matrix& a, const Matrix& b, Matrix& c, std::size_t r0, std::size_t r1) {
    const std::size_t n = b.cols();
    const std::size_t k = a.cols();
    for (std::size_t i = r0; i < r1; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                acc += static_cast<double>(a(i, p)) * static_cast<double>(b(p, j));
            }
            c(i, j) = static_cast<float>(acc);
        }
    }
}

} // namespace

Matrix matmul(const Matrix& a, const Matrix& b, int threads) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: shape mismatch " + std::to_string(a.rows()) + "x" +
                                    std::to_string(a.cols()) + " * " + std::to_string(b.rows()) +
                                    "x" + std::to_string(b.cols()));
    }
    Matrix c(a.rows(), b.cols());
    if (threads <= 1 || a.rows() < 2) {
        matmul_rows(a, b, c, 0, a.rows());
        return c;
    }
    const std::size_t nt = std::min<std::size_t>(static_cast<std::size_t>(threads), a.rows());
    std::vector<std::thread> pool;
    pool.reserve(nt);
    const std::size_t chunk = (a.rows() + nt - 1) / nt;
    for (std::size_t t = 0; t < nt; ++t) {
        const std::size_t r0 = t * chunk;
        const std::size_t r1 = std::min(a.rows(), r0 + chunk);
        if (r0 >= r1) break;
        pool.emplace_back(matmul_rows, std::cref(a), std::cref(b), std::ref(c), r0, r1);
    }
    for (auto& th : pool) th.join();
    return c;
}

Matrix softmax_rows(const Matrix& m, float scale, bool causal_mask) {
    if (!(scale > 0.0f)) throw std::invalid_argument("softmax_rows: scale must be > 0");
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const std::size_t limit = causal_mask ? std::min(m.cols(), i + 1) : m.cols();
        if (limit == 0) throw std::invalid_argument("softmax_rows: fully masked row");
        double maxv = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < limit; ++j) {
            const double v = static_cast<double>(scale) * static_cast<double>(m(i, j));
            if (v > maxv) maxv = v;
        }
        if (!std::isfinite(maxv)) throw std::invalid_argument("softmax_rows: non-finite input row");
        double sum = 0.0;
        for (std::size_t j = 0; j < limit; ++j) {
            const double v = static_cast<double>(scale) * static_cast<double>(m(i, j));
            const double e = std::exp(v - maxv);
            out(i, j) = static_cast<float>(e);
            sum += e;
        }
        for (std::size_t j = 0; j < limit; ++j) {
            out(i, j) = static_cast<float>(static_cast<double>(out(i, j)) / sum);
        }
        for (std::size_t j = limit; j < m.cols(); ++j) out(i, j) = 0.0f;
    }
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("add: shape mismatch");
    Matrix c(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) c.storage()[i] = a.storage()[i] + b.storage()[i];
    return c;
}

void copy_into_cols(Matrix& dst, const Matrix& src, std::size_t c0) {
    if (src.rows() != dst.rows() || c0 + src.cols() > dst.cols())
        throw std::invalid_argument("copy_into_cols: shape mismatch");
    for (std::size_t r = 0; r < src.rows(); ++r)
        for (std::size_t c = 0; c < src.cols(); ++c) dst(r, c0 + c) = src(r, c);
}

} // namespace plmlab
