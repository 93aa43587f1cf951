#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace plmlab {

// Dense row-major f32 matrix. Matmul accumulates in f64 with a fixed
// sequential-over-k order so results are reproducible and can be compared
// bit-for-bit against an independently coded oracle.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0f) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw std::invalid_argument("Matrix: data length " + std::to_string(data_.size()) +
                                        " != rows*cols " + std::to_string(rows_ * cols_));
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0f;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<float> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const float> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::vector<float>& storage() { return data_; }
    const std::vector<float>& storage() const { return data_; }

    // Columns [c0, c0+n) of every row, as a new matrix.
    Matrix slice_cols(std::size_t c0, std::size_t n) const {
        if (c0 + n > cols_) throw std::invalid_argument("slice_cols out of range");
        Matrix out(rows_, n);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < n; ++c) out(r, c) = (*this)(r, c0 + c);
        return out;
    }

    Matrix transposed() const {
        Matrix out(cols_, rows_);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
        return out;
    }

    bool all_finite() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<float> data_;
};

// C = A * B. Accumulation is f64, sequential over k, single-threaded by
// default. `threads > 1` partitions output rows; it changes nothing about
// the per-element accumulation order, so results stay bit-identical.
Matrix matmul(const Matrix& a, const Matrix& b, int threads = 1);

// Row-wise softmax of `scale * m`, stabilized by row-max subtraction.
// With `causal_mask`, entries at column j > row index are masked out and
// contribute exactly 0. A row with every entry masked is an error.
Matrix softmax_rows(const Matrix& m, float scale, bool causal_mask);

// x + y, shape-checked.
Matrix add(const Matrix& a, const Matrix& b);

// Writes rows of `src` into `dst` starting at column c0 (helper for
// assembling per-head concatenations).
void copy_into_cols(Matrix& dst, const Matrix& src, std::size_t c0);

} // namespace plmlab
