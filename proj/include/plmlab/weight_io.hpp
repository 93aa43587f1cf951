#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "plmlab/model.hpp"

namespace plmlab {

// Little-endian weight container: 8-byte magic, format version u32,
// length-prefixed canonical-JSON config, tensor count u32, then per tensor
// name (u32 length + bytes), rank u32, dims u64 x rank, raw f32 payload.
// Tied embeddings are stored once. Round-trips are bit-exact.
inline constexpr char kWeightMagic[8] = {'P', 'L', 'M', 'L', 'A', 'B', 'W', 'T'};
inline constexpr std::uint32_t kWeightFormatVersion = 1;

void save_weights(Model& model, const std::string& path);
Model load_weights(const std::string& path);

// Random-access view of a weight file for layer streaming: tensors can be
// re-read individually without holding the whole model.
class WeightFileReader {
public:
    explicit WeightFileReader(const std::string& path);

    const ModelConfig& config() const { return cfg_; }

    struct TensorInfo {
        std::uint64_t payload_offset = 0;
        std::uint64_t rows = 0;
        std::uint64_t cols = 0;
        std::uint64_t payload_bytes() const { return rows * cols * sizeof(float); }
    };

    bool has_tensor(const std::string& name) const { return index_.count(name) > 0; }
    // Reads one tensor payload from disk; returns bytes read via out-param.
    Matrix read_tensor(const std::string& name, std::uint64_t* bytes_read = nullptr) const;
    // Re-reads every tensor of layer `i` from storage.
    LayerWeights read_layer(std::size_t i, std::uint64_t* bytes_read = nullptr) const;
    std::uint64_t layer_bytes(std::size_t i) const;

    const std::map<std::string, TensorInfo>& tensors() const { return index_; }

private:
    std::string path_;
    ModelConfig cfg_;
    std::map<std::string, TensorInfo> index_;
};

} // namespace plmlab
