#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "plmlab/attention.hpp"
#include "plmlab/ffn.hpp"

namespace plmlab {

enum class AttentionKind { mla, gqa, mqa, mha };

std::string to_string(AttentionKind k);
std::string to_string(Activation a);
AttentionKind attention_kind_from_string(const std::string& s);
Activation activation_from_string(const std::string& s);

// Full architectural record for one decoder-only model.
struct ModelConfig {
    std::size_t n_layers = 0;
    std::size_t d_model = 0;
    std::size_t n_heads = 0;
    std::size_t n_kv_heads = 0;
    AttentionKind attention_kind = AttentionKind::mla;
    std::size_t d_nope = 0; // per-head content dim (gqa: d_head lives here)
    std::size_t d_rope = 0;
    std::size_t kv_rank = 0;              // mla only
    std::optional<std::size_t> q_rank;    // mla only; absent = full-rank queries
    std::size_t d_ffn = 0;
    Activation activation = Activation::relu2;
    std::size_t vocab_size = 0;
    std::size_t max_seq_len = 0;
    bool tie_embeddings = true;

    bool is_mla() const { return attention_kind == AttentionKind::mla; }
    // Grouped attention head width; for MLA this is d_nope + d_rope.
    std::size_t head_dim() const { return is_mla() ? d_nope + d_rope : d_nope; }

    MlaLayerConfig mla_layer() const;
    GqaLayerConfig gqa_layer() const;
    void validate() const;
};

struct ParamCounts {
    std::uint64_t embedding = 0;
    std::uint64_t non_embedding = 0;
    std::uint64_t total() const { return embedding + non_embedding; }
};

// Closed-form parameter counts: embedding = vocab x d_model (shared with
// the output head when tied; an untied head counts as non-embedding).
ParamCounts count_params(const ModelConfig& cfg);

// JSON round-trip with exactly the field names above; unknown fields are
// rejected. q_rank may be absent or null.
ModelConfig model_config_from_json(const std::string& json_text);
std::string model_config_to_json(const ModelConfig& cfg);

// Built-in presets; `preset_names()` lists them. PLM_LAB_PRESET_DIR, when
// set, is searched for <name>.json before the builtins.
ModelConfig preset(const std::string& name);
std::vector<std::string> preset_names();

// The seven sandbox candidates, in table order.
std::vector<ModelConfig> sandbox_candidates();

} // namespace plmlab
