#include "pixeldiff/architecture.hpp"

namespace pxd {

namespace {

using Fn = std::function<void(const LayerDef&)>;

void emit(const Fn& fn, std::string name, std::vector<int> shape, Init init) {
    fn(LayerDef{std::move(name), std::move(shape), init});
}

void emit_norm(const Fn& fn, const std::string& prefix, int ch) {
    emit(fn, prefix + ".norm.g", {ch}, Init::One);
    emit(fn, prefix + ".norm.b", {ch}, Init::Zero);
}

void emit_conv(const Fn& fn, const std::string& name, int k, int cin, int cout, Init init) {
    emit(fn, name + ".w", {k, k, cin, cout}, init);
    emit(fn, name + ".b", {cout}, init == Init::Zero ? Init::Zero : Init::Zero);
}

void emit_linear(const Fn& fn, const std::string& name, int din, int dout,
                 Init init = Init::FanIn) {
    emit(fn, name + ".w", {din, dout}, init);
    emit(fn, name + ".b", {dout}, Init::Zero);
}

// norm -> conv1(in->mid) -> film(mid) -> conv2(mid->out) [+ 1x1 skip if in != out]
void emit_res_block(const Fn& fn, const std::string& prefix, int in_ch, int mid_ch, int out_ch,
                    int cond_dim) {
    emit_norm(fn, prefix, in_ch);
    emit_conv(fn, prefix + ".conv1", 3, in_ch, mid_ch, Init::FanIn);
    emit(fn, prefix + ".film.w", {cond_dim, 2 * mid_ch}, Init::Zero);
    emit(fn, prefix + ".film.b", {2 * mid_ch}, Init::Zero);
    emit_conv(fn, prefix + ".conv2", 3, mid_ch, out_ch, Init::FanIn);
    if (in_ch != out_ch) emit_conv(fn, prefix + ".skip", 1, in_ch, out_ch, Init::FanIn);
}

void emit_attention(const Fn& fn, const std::string& prefix, int q_dim, int kv_dim, int h) {
    emit(fn, prefix + ".wq", {q_dim, h}, Init::FanIn);
    emit(fn, prefix + ".bq", {h}, Init::Zero);
    emit(fn, prefix + ".wk", {kv_dim, h}, Init::FanIn);
    emit(fn, prefix + ".bk", {h}, Init::Zero);
    emit(fn, prefix + ".wv", {kv_dim, h}, Init::FanIn);
    emit(fn, prefix + ".bv", {h}, Init::Zero);
    emit(fn, prefix + ".wo", {h, h}, Init::FanIn);
    emit(fn, prefix + ".bo", {h}, Init::Zero);
}

int log2i(int x) {
    int n = 0;
    while (x > 1) {
        x /= 2;
        n++;
    }
    return n;
}

}  // namespace

bool group_frozen_in_frozen_mode(const std::string& group) {
    return group == "text_enc" || group == "core";
}

void walk_model(const ModelConfig& cfg, const Fn& fn) {
    const CoreConfig& k = cfg.core;
    const int h = k.hidden_size, m = k.mlp_channels, td = k.text_dim;

    // time encoding
    emit_linear(fn, "time_enc.mlp.fc1", kTimeFeatureDim, h);
    emit_linear(fn, "time_enc.mlp.fc2", h, h);

    // text encoding: per-encoder projection, null sequence, attention pooling
    for (size_t e = 0; e < cfg.encoders.size(); e++)
        emit_linear(fn, "text_enc.proj" + std::to_string(e) + ".lin", cfg.encoders[e].embed_dim, td);
    emit(fn, "text_enc.null.emb.w", {cfg.total_text_len(), td}, Init::Small);
    emit(fn, "text_enc.pool.query.w", {kPoolQueries, td}, Init::Small);
    emit_attention(fn, "text_enc.pool.attn", td, td, h);
    emit(fn, "text_enc.pool.ln.g", {h}, Init::One);
    emit(fn, "text_enc.pool.ln.b", {h}, Init::Zero);
    emit_linear(fn, "text_enc.global.fc1", h, h);
    emit_linear(fn, "text_enc.global.fc2", h, h);

    // core: conv stem in, transformer blocks, conv stem out
    emit(fn, "core.pos.emb.w", {k.grid * k.grid, h}, Init::Small);
    emit_res_block(fn, "core.stem_in", h, m, h, h);
    for (int i = 0; i < k.num_blocks; i++) {
        char buf[32];
        snprintf(buf, sizeof(buf), "core.block%02d", i);
        std::string b = buf;
        emit(fn, b + ".film.w", {h, 2 * h}, Init::Zero);
        emit(fn, b + ".film.b", {2 * h}, Init::Zero);
        emit(fn, b + ".ln1.g", {h}, Init::One);
        emit(fn, b + ".ln1.b", {h}, Init::Zero);
        emit_attention(fn, b + ".attn", h, h, h);
        emit(fn, b + ".ln2.g", {h}, Init::One);
        emit(fn, b + ".ln2.b", {h}, Init::Zero);
        emit_attention(fn, b + ".xattn", h, td, h);
        emit(fn, b + ".ln3.g", {h}, Init::One);
        emit(fn, b + ".ln3.b", {h}, Init::Zero);
        emit_linear(fn, b + ".mlp1", h, m);
        emit_linear(fn, b + ".mlp2", m, h);
    }
    emit_res_block(fn, "core.stem_out", h, h, h, h);

    if (cfg.is_shallow()) {
        int reduction = cfg.shallow_input_resolution / k.grid;
        auto plan = entry_plan(reduction, cfg.shallow_entry_channels, h);
        for (size_t i = 0; i < plan.size(); i++)
            emit_conv(fn, "entry.stage" + std::to_string(i) + ".conv", 3, plan[i].cin, plan[i].cout,
                      Init::FanIn);
        emit_res_block(fn, "shallow_encoder.res0", h, h, h, h);
        emit_res_block(fn, "shallow_decoder.res0", h, h, h, h);
        for (int j = 0; j < log2i(reduction); j++)
            emit_conv(fn, "out_head.level" + std::to_string(j) + ".conv", 3, h, h, Init::FanIn);
        emit_conv(fn, "out_head.out.conv", 3, h, 3, Init::Zero);
    } else {
        const EncoderDecoderConfig& e = *cfg.encdec;
        int L = (int)e.channels_per_level.size();
        auto plan = entry_plan(e.entry_reduction, e.channels_per_level[0], e.channels_per_level[0]);
        for (size_t i = 0; i < plan.size(); i++)
            emit_conv(fn, "entry.stage" + std::to_string(i) + ".conv", 3, plan[i].cin, plan[i].cout,
                      Init::FanIn);
        for (int i = 0; i < L; i++) {
            int ch = e.channels_per_level[i];
            for (int j = 0; j < e.res_blocks_per_level[i]; j++)
                emit_res_block(fn, "encoder.l" + std::to_string(i) + "r" + std::to_string(j), ch, ch,
                               ch, h);
            if (i + 1 < L) {
                // downsampling is avgpool followed by a 1x1 projection
                emit(fn, "encoder.l" + std::to_string(i) + ".down.w",
                     {1, 1, ch, e.channels_per_level[i + 1]}, Init::FanIn);
                emit(fn, "encoder.l" + std::to_string(i) + ".down.b", {e.channels_per_level[i + 1]},
                     Init::Zero);
            }
        }
        emit(fn, "encoder.bridge.down.w", {1, 1, h, h}, Init::FanIn);
        emit(fn, "encoder.bridge.down.b", {h}, Init::Zero);
        emit(fn, "decoder.bridge.up.w", {1, 1, h, h}, Init::FanIn);
        emit(fn, "decoder.bridge.up.b", {h}, Init::Zero);
        for (int i = L - 1; i >= 0; i--) {
            int ch = e.channels_per_level[i];
            for (int j = 0; j < e.res_blocks_per_level[i]; j++) {
                int in_ch = (j == 0) ? 2 * ch : ch;
                emit_res_block(fn, "decoder.l" + std::to_string(i) + "r" + std::to_string(j), in_ch,
                               ch, ch, h);
            }
            if (i > 0) {
                emit(fn, "decoder.l" + std::to_string(i) + ".up.w",
                     {1, 1, ch, e.channels_per_level[i - 1]}, Init::FanIn);
                emit(fn, "decoder.l" + std::to_string(i) + ".up.b", {e.channels_per_level[i - 1]},
                     Init::Zero);
            }
        }
        for (int j = 0; j < log2i(e.entry_reduction); j++)
            emit_conv(fn, "out_head.level" + std::to_string(j) + ".conv", 3,
                      e.channels_per_level[0], e.channels_per_level[0], Init::FanIn);
        emit_conv(fn, "out_head.out.conv", 3, e.channels_per_level[0], 3, Init::Zero);
    }
}

int64_t count_params(const ModelConfig& cfg, const std::string& mode) {
    validate_model_config(cfg);
    if (mode != "total" && mode != "trainable")
        throw std::invalid_argument("count_params: mode must be 'total' or 'trainable'");
    bool trainable_only = (mode == "trainable");
    int64_t n = 0;
    walk_model(cfg, [&](const LayerDef& d) {
        if (trainable_only) {
            std::string group = d.name.substr(0, d.name.find('.'));
            if (group_frozen_in_frozen_mode(group)) return;
        }
        n += shape_numel(d.shape);
    });
    return n;
}

}  // namespace pxd
