#include "pixeldiff/config.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "pixeldiff/tensor.hpp"

namespace pxd {

static bool is_pow2(int x) { return x > 0 && (x & (x - 1)) == 0; }

void validate_model_config(const ModelConfig& c) {
    std::vector<std::string> errs;
    const CoreConfig& k = c.core;
    if (k.num_blocks < 1) errs.push_back("core.num_blocks must be >= 1");
    if (k.hidden_size < 1) errs.push_back("core.hidden_size must be >= 1");
    if (k.num_heads < 1 || k.hidden_size % std::max(1, k.num_heads) != 0)
        errs.push_back("core.hidden_size must be divisible by core.num_heads");
    if (k.grid < 1) errs.push_back("core.grid must be >= 1");
    if (k.mlp_channels < k.hidden_size) errs.push_back("core.mlp_channels must be >= core.hidden_size");
    if (k.text_dim < 1) errs.push_back("core.text_dim must be >= 1");
    if (c.encoders.empty()) errs.push_back("at least one text encoder is required");
    for (const auto& e : c.encoders) {
        if (e.seq_len < 1) errs.push_back("encoder '" + e.name + "': seq_len must be >= 1");
        if (e.embed_dim < 1) errs.push_back("encoder '" + e.name + "': embed_dim must be >= 1");
    }
    if (c.is_shallow()) {
        if (c.shallow_input_resolution % std::max(1, k.grid) != 0 ||
            !is_pow2(c.shallow_input_resolution / std::max(1, k.grid)))
            errs.push_back("shallow_input_resolution / grid must be a power of 2");
        if (c.shallow_entry_channels < 1) errs.push_back("shallow_entry_channels must be >= 1");
    } else {
        const EncoderDecoderConfig& e = *c.encdec;
        if (e.channels_per_level.empty()) errs.push_back("encdec.channels_per_level is empty");
        if (e.channels_per_level.size() != e.res_blocks_per_level.size())
            errs.push_back("encdec: channels_per_level and res_blocks_per_level differ in length");
        if (!is_pow2(e.entry_reduction)) errs.push_back("encdec.entry_reduction must be a power of 2");
        int64_t denom = (int64_t)e.entry_reduction << e.channels_per_level.size();
        if (denom == 0 || e.target_resolution % denom != 0 ||
            e.target_resolution / denom != k.grid)
            errs.push_back(
                "encdec: target_resolution / (entry_reduction * 2^levels) must equal core.grid");
        if (!e.channels_per_level.empty() && e.channels_per_level.back() != k.hidden_size)
            errs.push_back("encdec: innermost channel width must equal core.hidden_size");
        for (int ch : e.channels_per_level)
            if (ch < 1) errs.push_back("encdec: channel widths must be >= 1");
        for (int rb : e.res_blocks_per_level)
            if (rb < 1) errs.push_back("encdec: res block counts must be >= 1");
    }
    if (c.prediction != "epsilon" && c.prediction != "v")
        errs.push_back("prediction must be 'epsilon' or 'v'");
    if (!errs.empty()) {
        std::ostringstream os;
        os << "invalid model config:";
        for (const auto& e : errs) os << "\n  - " << e;
        throw std::invalid_argument(os.str());
    }
}

json to_json(const TextEncoderSpec& e) {
    return json{{"type", e.type},       {"name", e.name}, {"seq_len", e.seq_len},
                {"embed_dim", e.embed_dim}, {"vocab_path", e.vocab_path}, {"seed", e.seed}};
}

json to_json(const CoreConfig& c) {
    return json{{"num_blocks", c.num_blocks},   {"hidden_size", c.hidden_size},
                {"mlp_channels", c.mlp_channels}, {"num_heads", c.num_heads},
                {"grid", c.grid},               {"text_dim", c.text_dim}};
}

json to_json(const EncoderDecoderConfig& c) {
    return json{{"channels_per_level", c.channels_per_level},
                {"res_blocks_per_level", c.res_blocks_per_level},
                {"entry_reduction", c.entry_reduction},
                {"target_resolution", c.target_resolution}};
}

json to_json(const ModelConfig& c) {
    json j{{"core", to_json(c.core)},
           {"shallow_entry_channels", c.shallow_entry_channels},
           {"shallow_input_resolution", c.shallow_input_resolution},
           {"prediction", c.prediction}};
    j["encdec"] = c.encdec ? to_json(*c.encdec) : json(nullptr);
    json encs = json::array();
    for (const auto& e : c.encoders) encs.push_back(to_json(e));
    j["encoders"] = encs;
    return j;
}

TextEncoderSpec text_encoder_from_json(const json& j) {
    TextEncoderSpec e;
    e.type = j.value("type", "lookup");
    e.name = j.at("name").get<std::string>();
    e.seq_len = j.at("seq_len").get<int>();
    e.embed_dim = j.at("embed_dim").get<int>();
    e.vocab_path = j.value("vocab_path", "");
    e.seed = j.value("seed", (uint64_t)0);
    return e;
}

CoreConfig core_from_json(const json& j) {
    CoreConfig c;
    c.num_blocks = j.at("num_blocks").get<int>();
    c.hidden_size = j.at("hidden_size").get<int>();
    c.mlp_channels = j.at("mlp_channels").get<int>();
    c.num_heads = j.at("num_heads").get<int>();
    c.grid = j.value("grid", 16);
    c.text_dim = j.value("text_dim", c.hidden_size);
    return c;
}

EncoderDecoderConfig encdec_from_json(const json& j) {
    EncoderDecoderConfig c;
    c.channels_per_level = j.at("channels_per_level").get<std::vector<int>>();
    c.res_blocks_per_level = j.at("res_blocks_per_level").get<std::vector<int>>();
    c.entry_reduction = j.value("entry_reduction", 2);
    c.target_resolution = j.at("target_resolution").get<int>();
    return c;
}

ModelConfig model_from_json(const json& j) {
    ModelConfig c;
    c.core = core_from_json(j.at("core"));
    if (j.contains("encdec") && !j.at("encdec").is_null()) c.encdec = encdec_from_json(j.at("encdec"));
    c.shallow_entry_channels = j.value("shallow_entry_channels", 256);
    c.shallow_input_resolution = j.value("shallow_input_resolution", 64);
    c.prediction = j.value("prediction", "epsilon");
    if (j.contains("encoders"))
        for (const auto& e : j.at("encoders")) c.encoders.push_back(text_encoder_from_json(e));
    return c;
}

static std::string hex64(uint64_t v) {
    char buf[17];
    snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)v);
    return buf;
}

std::string core_fingerprint(const ModelConfig& c) {
    json j{{"core", to_json(c.core)}};
    json encs = json::array();
    for (const auto& e : c.encoders)
        encs.push_back(json{{"name", e.name}, {"seq_len", e.seq_len}, {"embed_dim", e.embed_dim}});
    j["encoders"] = encs;
    return hex64(fnv1a64(j.dump()));
}

std::string model_fingerprint(const ModelConfig& c) { return hex64(fnv1a64(to_json(c).dump())); }

static ModelPreset table_preset(const std::string& name, int blocks, int hidden, int mlp, int heads,
                                std::vector<int> chans) {
    ModelPreset p;
    p.name = name;
    ModelConfig m;
    m.core = CoreConfig{blocks, hidden, mlp, heads, 16, hidden};
    m.shallow_entry_channels = 256;
    m.shallow_input_resolution = 64;
    m.encoders = {TextEncoderSpec{"lookup", "t5xxl", 128, 4096, "", 11},
                  TextEncoderSpec{"trigram", "clip", 77, 1024, "", 12}};
    p.shallow = m;
    m.encdec = EncoderDecoderConfig{chans, std::vector<int>(chans.size(), 1), 2, 512};
    p.grown = m;
    return p;
}

ModelPreset model_preset(const std::string& name) {
    if (name == "small") return table_preset("small", 6, 1536, 6144, 12, {256, 384, 768, 1536});
    if (name == "large") return table_preset("large", 8, 2048, 8182, 16, {256, 512, 1024, 2048});
    if (name == "huge") return table_preset("huge", 12, 3072, 12288, 24, {384, 768, 1536, 3072});
    if (name == "xhuge") return table_preset("xhuge", 16, 4096, 16384, 32, {512, 1024, 2048, 4096});
    if (name == "toy") {
        ModelPreset p;
        p.name = "toy";
        ModelConfig m;
        m.core = CoreConfig{2, 24, 48, 4, 8, 24};
        m.shallow_entry_channels = 16;
        m.shallow_input_resolution = 32;
        m.encoders = {TextEncoderSpec{"lookup", "toy-vocab", 12, 32, "", 11},
                      TextEncoderSpec{"trigram", "toy-trigram", 20, 48, "", 12}};
        p.shallow = m;
        m.encdec = EncoderDecoderConfig{{12, 24}, {1, 1}, 2, 64};
        p.grown = m;
        return p;
    }
    throw std::invalid_argument("unknown preset '" + name + "' (small|large|huge|xhuge|toy)");
}

std::vector<std::string> preset_names() { return {"small", "large", "huge", "xhuge", "toy"}; }

}  // namespace pxd
