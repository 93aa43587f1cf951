#include "plmlab/weight_io.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace plmlab {

namespace {

void write_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ofstream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_u32(std::ifstream& in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("weight file: truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t read_u64(std::ifstream& in) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("weight file: truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

std::string read_name(std::ifstream& in) {
    const std::uint32_t len = read_u32(in);
    if (len > 4096) throw std::runtime_error("weight file: implausible name length");
    std::string s(len, '\0');
    if (!in.read(s.data(), len)) throw std::runtime_error("weight file: truncated");
    return s;
}

} // namespace

void save_weights(Model& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("save_weights: cannot open " + path);

    out.write(kWeightMagic, 8);
    write_u32(out, kWeightFormatVersion);
    const std::string cfg_json = model_config_to_json(model.config());
    write_u32(out, static_cast<std::uint32_t>(cfg_json.size()));
    out.write(cfg_json.data(), static_cast<std::streamsize>(cfg_json.size()));

    std::uint32_t count = 0;
    model.for_each_tensor([&](const std::string&, Matrix&) { ++count; });
    write_u32(out, count);

    model.for_each_tensor([&](const std::string& name, Matrix& m) {
        write_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(out, 2); // rank
        write_u64(out, m.rows());
        write_u64(out, m.cols());
        out.write(reinterpret_cast<const char*>(m.data()),
                  static_cast<std::streamsize>(m.size() * sizeof(float)));
    });
    if (!out) throw std::runtime_error("save_weights: write failed for " + path);
}

Model load_weights(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_weights: cannot open " + path);

    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kWeightMagic, 8) != 0)
        throw std::runtime_error("load_weights: bad magic");
    const std::uint32_t version = read_u32(in);
    if (version != kWeightFormatVersion)
        throw std::runtime_error("load_weights: unsupported format version " + std::to_string(version));

    const std::uint32_t cfg_len = read_u32(in);
    std::string cfg_json(cfg_len, '\0');
    if (!in.read(cfg_json.data(), cfg_len)) throw std::runtime_error("weight file: truncated");
    const ModelConfig cfg = model_config_from_json(cfg_json);

    Model model = Model::build(cfg, /*seed=*/0, /*init_std=*/0.0);
    const std::uint32_t count = read_u32(in);

    std::map<std::string, Matrix*> slots;
    model.for_each_tensor([&](const std::string& name, Matrix& m) { slots[name] = &m; });
    if (count != slots.size())
        throw std::runtime_error("load_weights: tensor count mismatch: file has " +
                                 std::to_string(count) + ", config implies " +
                                 std::to_string(slots.size()));

    std::size_t filled = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = read_name(in);
        const std::uint32_t rank = read_u32(in);
        if (rank != 2) throw std::runtime_error("load_weights: unsupported rank for " + name);
        const std::uint64_t rows = read_u64(in);
        const std::uint64_t cols = read_u64(in);
        auto it = slots.find(name);
        if (it == slots.end()) throw std::runtime_error("load_weights: unexpected tensor " + name);
        Matrix& slot = *it->second;
        if (slot.rows() != rows || slot.cols() != cols)
            throw std::runtime_error("load_weights: size mismatch for " + name);
        if (!in.read(reinterpret_cast<char*>(slot.data()),
                     static_cast<std::streamsize>(slot.size() * sizeof(float))))
            throw std::runtime_error("weight file: truncated");
        ++filled;
    }
    if (filled != slots.size()) throw std::runtime_error("load_weights: missing tensors");
    return model;
}

WeightFileReader::WeightFileReader(const std::string& path) : path_(path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("WeightFileReader: cannot open " + path);
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kWeightMagic, 8) != 0)
        throw std::runtime_error("WeightFileReader: bad magic");
    if (read_u32(in) != kWeightFormatVersion)
        throw std::runtime_error("WeightFileReader: unsupported format version");
    const std::uint32_t cfg_len = read_u32(in);
    std::string cfg_json(cfg_len, '\0');
    if (!in.read(cfg_json.data(), cfg_len)) throw std::runtime_error("weight file: truncated");
    cfg_ = model_config_from_json(cfg_json);

    const std::uint32_t count = read_u32(in);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = read_name(in);
        const std::uint32_t rank = read_u32(in);
        if (rank != 2) throw std::runtime_error("WeightFileReader: unsupported rank for " + name);
        TensorInfo info;
        info.rows = read_u64(in);
        info.cols = read_u64(in);
        info.payload_offset = static_cast<std::uint64_t>(in.tellg());
        index_[name] = info;
        in.seekg(static_cast<std::streamoff>(info.payload_bytes()), std::ios::cur);
        if (!in) throw std::runtime_error("weight file: truncated");
    }
}

Matrix WeightFileReader::read_tensor(const std::string& name, std::uint64_t* bytes_read) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::runtime_error("WeightFileReader: no tensor " + name);
    std::ifstream in(path_, std::ios::binary);
    if (!in) throw std::runtime_error("WeightFileReader: cannot open " + path_);
    in.seekg(static_cast<std::streamoff>(it->second.payload_offset));
    Matrix m(it->second.rows, it->second.cols);
    if (!in.read(reinterpret_cast<char*>(m.data()),
                 static_cast<std::streamsize>(m.size() * sizeof(float))))
        throw std::runtime_error("WeightFileReader: truncated payload for " + name);
    if (bytes_read) *bytes_read += it->second.payload_bytes();
    return m;
}

LayerWeights WeightFileReader::read_layer(std::size_t i, std::uint64_t* bytes_read) const {
    const std::string p = "layers." + std::to_string(i) + ".";
    LayerWeights lw;
    lw.attn_norm = read_tensor(p + "attn_norm.weight", bytes_read);
    lw.ffn_norm = read_tensor(p + "ffn_norm.weight", bytes_read);
    if (cfg_.is_mla()) {
        if (cfg_.q_rank) {
            lw.mla.w_dq = read_tensor(p + "attn.w_dq", bytes_read);
            lw.mla.w_uq = read_tensor(p + "attn.w_uq", bytes_read);
        } else {
            lw.mla.w_q = read_tensor(p + "attn.w_q", bytes_read);
        }
        if (cfg_.d_rope > 0) {
            lw.mla.w_qr = read_tensor(p + "attn.w_qr", bytes_read);
            lw.mla.w_kr = read_tensor(p + "attn.w_kr", bytes_read);
        }
        lw.mla.w_dkv = read_tensor(p + "attn.w_dkv", bytes_read);
        lw.mla.w_uk = read_tensor(p + "attn.w_uk", bytes_read);
        lw.mla.w_uv = read_tensor(p + "attn.w_uv", bytes_read);
        lw.mla.w_o = read_tensor(p + "attn.w_o", bytes_read);
    } else {
        lw.gqa.w_q = read_tensor(p + "attn.w_q", bytes_read);
        lw.gqa.w_k = read_tensor(p + "attn.w_k", bytes_read);
        lw.gqa.w_v = read_tensor(p + "attn.w_v", bytes_read);
        lw.gqa.w_o = read_tensor(p + "attn.w_o", bytes_read);
    }
    lw.ffn.w_up = read_tensor(p + "ffn.w_up", bytes_read);
    if (cfg_.activation == Activation::swiglu) lw.ffn.w_gate = read_tensor(p + "ffn.w_gate", bytes_read);
    lw.ffn.w_down = read_tensor(p + "ffn.w_down", bytes_read);
    return lw;
}

std::uint64_t WeightFileReader::layer_bytes(std::size_t i) const {
    const std::string p = "layers." + std::to_string(i) + ".";
    std::uint64_t total = 0;
    for (const auto& [name, info] : index_)
        if (name.rfind(p, 0) == 0) total += info.payload_bytes();
    return total;
}

} // namespace plmlab
