#ifndef PIXELDIFF_CONFIG_HPP
#define PIXELDIFF_CONFIG_HPP

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace pxd {

using json = nlohmann::ordered_json;

// Interface description of a text encoder; the encoder weights themselves are
// external to the model (toy implementations live in conditioning).
struct TextEncoderSpec {
    std::string type = "lookup";  // lookup | trigram (toy implementations)
    std::string name;
    int seq_len = 0;
    int embed_dim = 0;
    std::string vocab_path;  // lookup only
    uint64_t seed = 0;
};

struct CoreConfig {
    int num_blocks = 0;
    int hidden_size = 0;
    int mlp_channels = 0;
    int num_heads = 0;
    int grid = 16;
    int text_dim = 0;  // width of projected text embeddings (== hidden_size in presets)
};

struct EncoderDecoderConfig {
    std::vector<int> channels_per_level;   // outermost -> innermost
    std::vector<int> res_blocks_per_level;
    int entry_reduction = 2;
    int target_resolution = 0;
};

struct ModelConfig {
    CoreConfig core;
    std::optional<EncoderDecoderConfig> encdec;  // absent => shallow form
    int shallow_entry_channels = 256;
    int shallow_input_resolution = 64;
    std::vector<TextEncoderSpec> encoders;
    std::string prediction = "epsilon";  // epsilon | v

    bool is_shallow() const { return !encdec.has_value(); }
    int resolution() const {
        return is_shallow() ? shallow_input_resolution : encdec->target_resolution;
    }
    int total_text_len() const {
        int n = 0;
        for (const auto& e : encoders) n += e.seq_len;
        return n;
    }
};

// throws std::invalid_argument describing every violated invariant
void validate_model_config(const ModelConfig& c);

json to_json(const TextEncoderSpec& e);
json to_json(const CoreConfig& c);
json to_json(const EncoderDecoderConfig& c);
json to_json(const ModelConfig& c);
TextEncoderSpec text_encoder_from_json(const json& j);
CoreConfig core_from_json(const json& j);
EncoderDecoderConfig encdec_from_json(const json& j);
ModelConfig model_from_json(const json& j);

// fingerprint over everything transplant must agree on: core layout plus the
// text encoder interface (projection shapes depend on it)
std::string core_fingerprint(const ModelConfig& c);
// fingerprint of the full architectural description
std::string model_fingerprint(const ModelConfig& c);

struct ModelPreset {
    std::string name;
    ModelConfig shallow;
    ModelConfig grown;
};

// small / large / huge / xhuge mirror the published ladder; toy fits a laptop CPU
ModelPreset model_preset(const std::string& name);
std::vector<std::string> preset_names();

}  // namespace pxd

#endif
