#include "plmlab/model_config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace plmlab {

std::string to_string(AttentionKind k) {
    switch (k) {
        case AttentionKind::mla: return "mla";
        case AttentionKind::gqa: return "gqa";
        case AttentionKind::mqa: return "mqa";
        case AttentionKind::mha: return "mha";
    }
    return "?";
}

std::string to_string(Activation a) { return a == Activation::relu2 ? "relu2" : "swiglu"; }

AttentionKind attention_kind_from_string(const std::string& s) {
    if (s == "mla") return AttentionKind::mla;
    if (s == "gqa") return AttentionKind::gqa;
    if (s == "mqa") return AttentionKind::mqa;
    if (s == "mha") return AttentionKind::mha;
    throw std::invalid_argument("unknown attention_kind: " + s);
}

Activation activation_from_string(const std::string& s) {
    if (s == "relu2") return Activation::relu2;
    if (s == "swiglu") return Activation::swiglu;
    throw std::invalid_argument("unknown activation: " + s);
}

MlaLayerConfig ModelConfig::mla_layer() const {
    return MlaLayerConfig{d_model, n_heads, d_nope, d_rope, kv_rank, q_rank};
}

GqaLayerConfig ModelConfig::gqa_layer() const {
    return GqaLayerConfig{d_model, n_heads, n_kv_heads, d_nope};
}

void ModelConfig::validate() const {
    if (n_layers == 0 || d_model == 0 || n_heads == 0 || d_ffn == 0 || vocab_size == 0 ||
        max_seq_len == 0)
        throw std::invalid_argument("ModelConfig: dimensions must be positive");
    switch (attention_kind) {
        case AttentionKind::mla:
            if (kv_rank == 0) throw std::invalid_argument("ModelConfig: mla requires kv_rank > 0");
            mla_layer().validate();
            break;
        case AttentionKind::mqa:
            if (n_kv_heads != 1) throw std::invalid_argument("ModelConfig: mqa requires n_kv_heads == 1");
            gqa_layer().validate();
            break;
        case AttentionKind::mha:
            if (n_kv_heads != n_heads)
                throw std::invalid_argument("ModelConfig: mha requires n_kv_heads == n_heads");
            gqa_layer().validate();
            break;
        case AttentionKind::gqa:
            gqa_layer().validate();
            break;
    }
}

ParamCounts count_params(const ModelConfig& cfg) {
    cfg.validate();
    ParamCounts p;
    p.embedding = static_cast<std::uint64_t>(cfg.vocab_size) * cfg.d_model;

    std::uint64_t attn = 0;
    if (cfg.is_mla()) {
        const std::uint64_t d = cfg.d_model, nh = cfg.n_heads, dn = cfg.d_nope, dr = cfg.d_rope,
                            dc = cfg.kv_rank;
        if (cfg.q_rank) {
            const std::uint64_t qr = *cfg.q_rank;
            attn += qr * d;            // query down-projection
            attn += nh * dn * qr;      // query up-projection
            attn += nh * dr * qr;      // rotary queries, from the query latent
        } else {
            attn += nh * dn * d;       // full-rank queries
            attn += nh * dr * d;       // rotary queries, from the hidden state
        }
        attn += dc * d;                // kv down-projection
        attn += 2 * nh * dn * dc;      // key/value up-projections
        attn += dr * d;                // shared rotary key
        attn += d * nh * dn;           // output projection
    } else {
        const std::uint64_t d = cfg.d_model, nh = cfg.n_heads, nkv = cfg.n_kv_heads,
                            dh = cfg.head_dim();
        attn += nh * dh * d;       // queries
        attn += 2 * nkv * dh * d;  // keys/values
        attn += d * nh * dh;       // output projection
    }

    std::uint64_t ffn = 2ull * cfg.d_ffn * cfg.d_model;
    if (cfg.activation == Activation::swiglu) ffn += static_cast<std::uint64_t>(cfg.d_ffn) * cfg.d_model;

    const std::uint64_t norms = 2ull * cfg.d_model; // per layer: attn + ffn
    p.non_embedding = cfg.n_layers * (attn + ffn + norms) + cfg.d_model; // + final norm
    if (!cfg.tie_embeddings) p.non_embedding += static_cast<std::uint64_t>(cfg.d_model) * cfg.vocab_size;
    return p;
}

namespace {

using nlohmann::json;

const std::set<std::string> kConfigFields = {
    "n_layers",  "d_model",   "n_heads",    "n_kv_heads",  "attention_kind",
    "d_nope",    "d_rope",    "kv_rank",    "q_rank",      "d_ffn",
    "activation", "vocab_size", "max_seq_len", "tie_embeddings"};

} // namespace

ModelConfig model_config_from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw std::invalid_argument("config: top-level JSON object required");
    for (const auto& [key, _] : j.items())
        if (!kConfigFields.count(key)) throw std::invalid_argument("config: unknown field '" + key + "'");

    ModelConfig cfg;
    try {
        cfg.n_layers = j.at("n_layers").get<std::size_t>();
        cfg.d_model = j.at("d_model").get<std::size_t>();
        cfg.n_heads = j.at("n_heads").get<std::size_t>();
        cfg.n_kv_heads = j.at("n_kv_heads").get<std::size_t>();
        cfg.attention_kind = attention_kind_from_string(j.at("attention_kind").get<std::string>());
        cfg.d_nope = j.at("d_nope").get<std::size_t>();
        cfg.d_rope = j.at("d_rope").get<std::size_t>();
        cfg.kv_rank = j.at("kv_rank").get<std::size_t>();
        if (j.contains("q_rank") && !j.at("q_rank").is_null())
            cfg.q_rank = j.at("q_rank").get<std::size_t>();
        cfg.d_ffn = j.at("d_ffn").get<std::size_t>();
        cfg.activation = activation_from_string(j.at("activation").get<std::string>());
        cfg.vocab_size = j.at("vocab_size").get<std::size_t>();
        cfg.max_seq_len = j.at("max_seq_len").get<std::size_t>();
        cfg.tie_embeddings = j.at("tie_embeddings").get<bool>();
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::string model_config_to_json(const ModelConfig& cfg) {
    json j;
    j["n_layers"] = cfg.n_layers;
    j["d_model"] = cfg.d_model;
    j["n_heads"] = cfg.n_heads;
    j["n_kv_heads"] = cfg.n_kv_heads;
    j["attention_kind"] = to_string(cfg.attention_kind);
    j["d_nope"] = cfg.d_nope;
    j["d_rope"] = cfg.d_rope;
    j["kv_rank"] = cfg.kv_rank;
    if (cfg.q_rank) j["q_rank"] = *cfg.q_rank;
    j["d_ffn"] = cfg.d_ffn;
    j["activation"] = to_string(cfg.activation);
    j["vocab_size"] = cfg.vocab_size;
    j["max_seq_len"] = cfg.max_seq_len;
    j["tie_embeddings"] = cfg.tie_embeddings;
    return j.dump(2);
}

namespace {

ModelConfig candidate_config(std::size_t n_layers, std::size_t d_model, std::size_t n_heads,
                             std::size_t d_head, std::size_t d_ffn, std::size_t kv_rank,
                             std::size_t q_rank, std::size_t d_rope) {
    ModelConfig c;
    c.n_layers = n_layers;
    c.d_model = d_model;
    c.n_heads = n_heads;
    c.n_kv_heads = n_heads;
    c.attention_kind = AttentionKind::mla;
    c.d_nope = d_head;
    c.d_rope = d_rope;
    c.kv_rank = kv_rank;
    c.q_rank = q_rank;
    c.d_ffn = d_ffn;
    c.activation = Activation::relu2;
    c.vocab_size = 151936;
    c.max_seq_len = 4096;
    c.tie_embeddings = true;
    return c;
}

ModelConfig builtin_preset(const std::string& name) {
    if (name == "plm-1.8b") {
        ModelConfig c;
        c.n_layers = 32;
        c.d_model = 2048;
        c.n_heads = 16;
        c.n_kv_heads = 16;
        c.attention_kind = AttentionKind::mla;
        c.d_nope = 128;
        c.d_rope = 64;
        c.kv_rank = 512;
        c.d_ffn = 8192;
        c.activation = Activation::relu2;
        c.vocab_size = 151936;
        c.max_seq_len = 4096;
        c.tie_embeddings = true;
        return c;
    }
    if (name == "plm-micro") {
        ModelConfig c;
        c.n_layers = 4;
        c.d_model = 128;
        c.n_heads = 4;
        c.n_kv_heads = 4;
        c.attention_kind = AttentionKind::mla;
        c.d_nope = 16;
        c.d_rope = 8;
        c.kv_rank = 32;
        c.d_ffn = 512;
        c.activation = Activation::relu2;
        c.vocab_size = 512;
        c.max_seq_len = 1024;
        c.tie_embeddings = true;
        return c;
    }
    if (name == "plm-micro-gqa") {
        ModelConfig c;
        c.n_layers = 4;
        c.d_model = 128;
        c.n_heads = 4;
        c.n_kv_heads = 4;
        c.attention_kind = AttentionKind::gqa;
        c.d_nope = 32;
        c.d_rope = 0;
        c.kv_rank = 0;
        c.d_ffn = 512;
        c.activation = Activation::swiglu;
        c.vocab_size = 512;
        c.max_seq_len = 1024;
        c.tie_embeddings = true;
        return c;
    }
    if (name == "plm-micro-mqa") {
        ModelConfig c;
        c.n_layers = 4;
        c.d_model = 128;
        c.n_heads = 4;
        c.n_kv_heads = 1;
        c.attention_kind = AttentionKind::mqa;
        c.d_nope = 32;
        c.d_rope = 0;
        c.kv_rank = 0;
        c.d_ffn = 512;
        c.activation = Activation::swiglu;
        c.vocab_size = 512;
        c.max_seq_len = 1024;
        c.tie_embeddings = true;
        return c;
    }
    if (name.rfind("candidate-", 0) == 0 && name.size() == 11) {
        const int idx = name[10] - '0';
        auto all = sandbox_candidates();
        if (idx >= 1 && idx <= static_cast<int>(all.size())) return all[static_cast<std::size_t>(idx - 1)];
    }
    throw std::invalid_argument("unknown preset: " + name);
}

} // namespace

std::vector<ModelConfig> sandbox_candidates() {
    return {
        candidate_config(28, 2816, 44, 64, 7040, 256, 768, 32),
        candidate_config(32, 2304, 36, 64, 5760, 256, 768, 32),
        candidate_config(32, 2560, 40, 64, 6400, 256, 768, 32),
        candidate_config(36, 2304, 36, 64, 5760, 256, 768, 32),
        candidate_config(40, 2304, 36, 64, 5760, 256, 768, 32),
        candidate_config(36, 2048, 32, 64, 8192, 256, 768, 32),
        candidate_config(32, 2048, 16, 128, 8192, 512, 1536, 64),
    };
}

ModelConfig preset(const std::string& name) {
    if (const char* dir = std::getenv("PLM_LAB_PRESET_DIR")) {
        const std::string path = std::string(dir) + "/" + name + ".json";
        std::ifstream in(path);
        if (in) {
            std::ostringstream ss;
            ss << in.rdbuf();
            return model_config_from_json(ss.str());
        }
    }
    return builtin_preset(name);
}

std::vector<std::string> preset_names() {
    return {"plm-1.8b",   "plm-micro",   "plm-micro-gqa", "plm-micro-mqa", "candidate-1",
            "candidate-2", "candidate-3", "candidate-4",   "candidate-5",   "candidate-6",
            "candidate-7"};
}

} // namespace plmlab
