#pragma once

#include <cstdint>
#include <vector>

#include "plmlab/matrix.hpp"

namespace plmlab {

// Symmetric per-row absmax quantization. scale = max|row| / (2^(b-1) - 1);
// values are rounded to signed integers and packed little-endian (two
// nibbles per byte at 4 bits). Per-entry dequantization error is bounded
// by the row scale.
struct QuantizedMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    int bit_width = 16; // one of {4, 8, 16}
    std::vector<float> row_scales;
    std::vector<std::uint8_t> packed;

    // Packed integer payload size; excludes the per-row scale vector.
    std::size_t payload_bytes() const { return packed.size(); }
    std::size_t scale_bytes() const { return row_scales.size() * sizeof(float); }
    std::size_t row_stride_bytes() const;
};

QuantizedMatrix quantize(const Matrix& w, int bit_width);
Matrix dequantize(const QuantizedMatrix& q);

} // namespace plmlab
