#include "plmlab/quant.hpp"

#include <cmath>
#include <stdexcept>

namespace plmlab {

namespace {

int q_max(int bit_width) { return (1 << (bit_width - 1)) - 1; }

} // namespace

std::size_t QuantizedMatrix::row_stride_bytes() const {
    switch (bit_width) {
        case 16: return cols * 2;
        case 8: return cols;
        case 4: return (cols + 1) / 2;
        default: throw std::invalid_argument("QuantizedMatrix: bad bit width");
    }
}

QuantizedMatrix quantize(const Matrix& w, int bit_width) {
    if (bit_width != 4 && bit_width != 8 && bit_width != 16)
        throw std::invalid_argument("quantize: bit_width must be 4, 8, or 16");
    if (!w.all_finite()) throw std::invalid_argument("quantize: non-finite input");

    QuantizedMatrix q;
    q.rows = w.rows();
    q.cols = w.cols();
    q.bit_width = bit_width;
    q.row_scales.resize(w.rows(), 0.0f);
    q.packed.assign(w.rows() * q.row_stride_bytes(), 0);

    const int qmax = q_max(bit_width);
    for (std::size_t r = 0; r < w.rows(); ++r) {
        float amax = 0.0f;
        for (std::size_t c = 0; c < w.cols(); ++c) amax = std::max(amax, std::fabs(w(r, c)));
        const float scale = amax / static_cast<float>(qmax);
        q.row_scales[r] = scale;
        std::uint8_t* row_bytes = q.packed.data() + r * q.row_stride_bytes();
        for (std::size_t c = 0; c < w.cols(); ++c) {
            int v = 0;
            if (scale > 0.0f) {
                v = static_cast<int>(std::lround(static_cast<double>(w(r, c)) / scale));
                v = std::max(-qmax, std::min(qmax, v));
            }
            switch (bit_width) {
                case 16: {
                    const std::int16_t s = static_cast<std::int16_t>(v);
                    row_bytes[2 * c] = static_cast<std::uint8_t>(s & 0xFF);
                    row_bytes[2 * c + 1] = static_cast<std::uint8_t>((s >> 8) & 0xFF);
                    break;
                }
                case 8:
                    row_bytes[c] = static_cast<std::uint8_t>(static_cast<std::int8_t>(v));
                    break;
                case 4: {
                    // Offset-8 nibble; low nibble = even column.
                    const std::uint8_t nib = static_cast<std::uint8_t>(v + 8);
                    if (c % 2 == 0)
                        row_bytes[c / 2] = static_cast<std::uint8_t>((row_bytes[c / 2] & 0xF0) | nib);
                    else
                        row_bytes[c / 2] = static_cast<std::uint8_t>((row_bytes[c / 2] & 0x0F) | (nib << 4));
                    break;
                }
            }
        }
    }
    return q;
}

Matrix dequantize(const QuantizedMatrix& q) {
    Matrix w(q.rows, q.cols);
    for (std::size_t r = 0; r < q.rows; ++r) {
        const float scale = q.row_scales[r];
        const std::uint8_t* row_bytes = q.packed.data() + r * q.row_stride_bytes();
        for (std::size_t c = 0; c < q.cols; ++c) {
            int v = 0;
            switch (q.bit_width) {
                case 16: {
                    const std::uint16_t lo = row_bytes[2 * c];
                    const std::uint16_t hi = row_bytes[2 * c + 1];
                    v = static_cast<std::int16_t>(lo | (hi << 8));
                    break;
                }
                case 8:
                    v = static_cast<std::int8_t>(row_bytes[c]);
                    break;
                case 4: {
                    const std::uint8_t byte = row_bytes[c / 2];
                    const std::uint8_t nib = (c % 2 == 0) ? (byte & 0x0F) : (byte >> 4);
                    v = static_cast<int>(nib) - 8;
                    break;
                }
                default: throw std::invalid_argument("dequantize: bad bit width");
            }
            w(r, c) = scale * static_cast<float>(v);
        }
    }
    return w;
}

} // namespace plmlab
