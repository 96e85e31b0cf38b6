#ifndef PIXELDIFF_ARCHITECTURE_HPP
#define PIXELDIFF_ARCHITECTURE_HPP

// Shallow and grown UViT builders sharing one layout walker, so the symbolic
// parameter count, the allocating builder and checkpoint surgery can never
// disagree about names or shapes.
//
// Core group layout (identical in both forms): a conv stem block into the
// token grid, num_blocks pre-norm transformer blocks {film, self-attn,
// cross-attn, mlp}, and a conv stem block out. Time and pooled-text
// conditioning enter through film (scale/shift) layers.

#include <functional>
#include <set>

#include "pixeldiff/autograd.hpp"
#include "pixeldiff/config.hpp"
#include "pixeldiff/params.hpp"

namespace pxd {

enum class Init {
    FanIn,  // truncated normal, std = 1/sqrt(fan_in)
    Zero,
    Small,  // truncated normal, std = 0.02 (embeddings)
    One,
};

struct LayerDef {
    std::string name;
    std::vector<int> shape;
    Init init;
};

constexpr int kTimeFeatureDim = 128;
constexpr int kPoolQueries = 8;

// Entry stage plan shared by the walker and the forward pass. A reduction of
// 2^n maps to n stride-2 3x3 convs (3 -> mid -> ... -> out); reduction 1
// keeps a single stride-1 conv so the channel width still expands.
struct EntryStage {
    int cin, cout, stride;
};
inline std::vector<EntryStage> entry_plan(int reduction, int mid_channels, int out_channels) {
    int stages = 0;
    for (int r = reduction; r > 1; r /= 2) stages++;
    if (stages == 0) return {{3, out_channels, 1}};
    std::vector<EntryStage> plan;
    for (int i = 0; i < stages; i++)
        plan.push_back({i == 0 ? 3 : mid_channels, i == stages - 1 ? out_channels : mid_channels, 2});
    return plan;
}

// Enumerates every parameter of the model in a fixed order.
void walk_model(const ModelConfig& cfg, const std::function<void(const LayerDef&)>& fn);

// Parameter groups frozen in the 'frozen' training mode.
bool group_frozen_in_frozen_mode(const std::string& group);

// Symbolic count; mode is "total" or "trainable" (trainable under the
// frozen-mode mask). No arrays are allocated.
int64_t count_params(const ModelConfig& cfg, const std::string& mode = "total");

// ---------------------------------------------------------------------------

template <typename T>
ParameterTreeT<T> build_model(const ModelConfig& cfg, uint64_t seed) {
    validate_model_config(cfg);
    ParameterTreeT<T> tree;
    Rng root(seed);
    walk_model(cfg, [&](const LayerDef& d) {
        Rng r = root.fork(d.name);
        TensorT<T> t;
        switch (d.init) {
            case Init::FanIn: {
                int64_t fan_in = 1;
                for (size_t i = 0; i + 1 < d.shape.size(); i++) fan_in *= d.shape[i];
                t = truncated_normal<T>(d.shape, r, 1.0 / std::sqrt((double)fan_in));
                break;
            }
            case Init::Zero:
                t = TensorT<T>::zeros(d.shape);
                break;
            case Init::Small:
                t = truncated_normal<T>(d.shape, r, 0.02);
                break;
            case Init::One:
                t = TensorT<T>::full(d.shape, (T)1);
                break;
        }
        tree.entries.emplace(d.name, std::move(t));
    });
    tree.metadata["config"] = to_json(cfg);
    tree.metadata["config_fingerprint"] = model_fingerprint(cfg);
    tree.metadata["core_fingerprint"] = core_fingerprint(cfg);
    tree.metadata["seed"] = seed;
    return tree;
}

template <typename T>
ParameterTreeT<T> build_shallow(const ModelConfig& cfg, uint64_t seed) {
    if (!cfg.is_shallow())
        throw std::invalid_argument("build_shallow: config is in grown form");
    return build_model<T>(cfg, seed);
}

template <typename T>
ParameterTreeT<T> build_uvit(const ModelConfig& cfg, uint64_t seed) {
    if (cfg.is_shallow()) throw std::invalid_argument("build_uvit: config is in shallow form");
    return build_model<T>(cfg, seed);
}

// ---------------------------------------------------------------------------
// forward
// ---------------------------------------------------------------------------

// Batched conditioning inputs, pre-projection. key_bias is 0 for attendable
// positions and a large negative number for padding; rows where null_sel is
// set must be all zeros (the learned null sequence is fully valid).
template <typename T>
struct BatchCond {
    std::vector<TensorT<T>> seqs;  // per encoder: [B, seq_len_k, embed_dim_k]
    TensorT<T> key_bias;           // [B, total_len]
    std::vector<uint8_t> null_sel;
};

template <typename T>
TensorT<T> sin_features(const std::vector<double>& t_batch) {
    int B = (int)t_batch.size();
    const int S = kTimeFeatureDim, half = S / 2;
    TensorT<T> f({B, S});
    for (int b = 0; b < B; b++)
        for (int k = 0; k < half; k++) {
            double freq = std::exp(-std::log(10000.0) * (double)k / (double)(half - 1));
            double ang = t_batch[b] * 1000.0 * freq;
            f.at((int64_t)b * S + k) = (T)std::sin(ang);
            f.at((int64_t)b * S + half + k) = (T)std::cos(ang);
        }
    return f;
}

template <typename T>
class ModelForward {
public:
    ModelForward(GraphT<T>& g, const ParameterTreeT<T>& tree, const ModelConfig& cfg,
                 const std::set<std::string>* frozen = nullptr)
        : g_(&g), tree_(&tree), cfg_(&cfg), frozen_(frozen) {}

    using Var = ag::Var<T>;

    // z [B, R, R, 3], t per sample, prediction with z's shape
    Var run(Var z, const std::vector<double>& t_batch, const BatchCond<T>& cond) {
        const ModelConfig& c = *cfg_;
        int R = c.resolution();
        if (z.shape()[1] != R || z.shape()[2] != R)
            throw std::invalid_argument("forward: input resolution " + std::to_string(z.shape()[1]) +
                                        " does not match config resolution " + std::to_string(R));
        auto [ctx, cvec] = conditioning(t_batch, cond, z.shape()[0]);
        if (c.is_shallow()) return shallow(z, ctx, cvec);
        return grown(z, ctx, cvec);
    }

    // the core stack alone: x [B, grid, grid, h]
    Var core(Var x, Var ctx, Var cvec) {
        const CoreConfig& k = cfg_->core;
        x = res_block(x, "core.stem_in", k.hidden_size, k.mlp_channels, k.hidden_size, cvec);
        int N = k.grid * k.grid;
        Var tok = ag::reshape(x, {x.shape()[0], N, k.hidden_size});
        tok = ag::add_rows(tok, p("core.pos.emb.w"));
        char buf[32];
        for (int i = 0; i < k.num_blocks; i++) {
            snprintf(buf, sizeof(buf), "core.block%02d", i);
            tok = transformer_block(tok, buf, ctx, cvec);
        }
        x = ag::reshape(tok, {x.shape()[0], k.grid, k.grid, k.hidden_size});
        x = res_block(x, "core.stem_out", k.hidden_size, k.hidden_size, k.hidden_size, cvec);
        return x;
    }

    // projected+concatenated text context [B, L, h] and the conditioning
    // vector [B, h] (time embedding + pooled text)
    std::pair<Var, Var> conditioning(const std::vector<double>& t_batch, const BatchCond<T>& cond,
                                     int batch) {
        const ModelConfig& c = *cfg_;
        int h = c.core.text_dim;
        // per-encoder projection, then concatenation along the sequence axis
        std::vector<Var> segs;
        for (size_t k = 0; k < c.encoders.size(); k++) {
            std::string base = "text_enc.proj" + std::to_string(k) + ".lin.";
            Var s = g_->input(cond.seqs[k]);
            segs.push_back(ag::linear(s, p(base + "w"), p(base + "b")));
        }
        Var ctx = segs.size() == 1 ? segs[0] : ag::concat(segs, 1);
        ctx = ag::mix_rows(ctx, p("text_enc.null.emb.w"), cond.null_sel);
        key_bias_ = &cond.key_bias;

        // time pathway
        Var tf = g_->input(sin_features<T>(t_batch));
        Var te = ag::linear(tf, p("time_enc.mlp.fc1.w"), p("time_enc.mlp.fc1.b"));
        te = ag::swish(te);
        te = ag::linear(te, p("time_enc.mlp.fc2.w"), p("time_enc.mlp.fc2.b"));

        // pooled text pathway: learned queries attend over the context
        Var q0 = g_->input(TensorT<T>::zeros({batch, kPoolQueries, h}));
        Var q = ag::add_rows(q0, p("text_enc.pool.query.w"));
        Var pooled = attention(q, ctx, "text_enc.pool.attn", 1, true);
        pooled = ag::layer_norm(pooled, p("text_enc.pool.ln.g"), p("text_enc.pool.ln.b"));
        pooled = ag::mean_axis1(pooled);
        pooled = ag::linear(pooled, p("text_enc.global.fc1.w"), p("text_enc.global.fc1.b"));
        pooled = ag::swish(pooled);
        pooled = ag::linear(pooled, p("text_enc.global.fc2.w"), p("text_enc.global.fc2.b"));

        return {ctx, ag::add(te, pooled)};
    }

    // leaf vars of every parameter touched by the last run (for gradient access)
    const std::map<std::string, Var>& used_params() const { return cache_; }

private:
    Var p(const std::string& name) {
        auto it = cache_.find(name);
        if (it != cache_.end()) return it->second;
        Var v = g_->param_with_grad(tree_->at(name), !(frozen_ && frozen_->count(name)));
        cache_.emplace(name, v);
        return v;
    }

    Var film_from(Var x, Var cvec, const std::string& prefix, int width) {
        Var st = ag::linear(cvec, p(prefix + ".film.w"), p(prefix + ".film.b"));  // [B, 2*width]
        Var sc = ag::slice(st, 1, 0, width);
        Var sh = ag::slice(st, 1, width, width);
        return ag::film(x, sc, sh);
    }

    // norm -> swish -> conv1 -> film -> swish -> conv2, residual add
    Var res_block(Var x, const std::string& prefix, int in_ch, int mid_ch, int out_ch, Var cvec) {
        Var y = ag::layer_norm(x, p(prefix + ".norm.g"), p(prefix + ".norm.b"));
        y = ag::swish(y);
        y = ag::conv2d(y, p(prefix + ".conv1.w"), p(prefix + ".conv1.b"), 1, 1);
        y = film_from(y, cvec, prefix, mid_ch);
        y = ag::swish(y);
        y = ag::conv2d(y, p(prefix + ".conv2.w"), p(prefix + ".conv2.b"), 1, 1);
        Var skip = x;
        if (in_ch != out_ch)
            skip = ag::conv2d(x, p(prefix + ".skip.w"), p(prefix + ".skip.b"), 1, 0);
        return ag::add(skip, y);
    }

    Var attention(Var xq, Var kv, const std::string& prefix, int heads, bool masked) {
        int B = xq.shape()[0], Nq = xq.shape()[1];
        int h = cfg_->core.hidden_size;
        int dh = h / heads;
        Var q = ag::linear(xq, p(prefix + ".wq"), p(prefix + ".bq"));
        Var k = ag::linear(kv, p(prefix + ".wk"), p(prefix + ".bk"));
        Var v = ag::linear(kv, p(prefix + ".wv"), p(prefix + ".bv"));
        int Nk = k.shape()[1];
        auto split = [&](Var t, int N) {
            t = ag::reshape(t, {B, N, heads, dh});
            t = ag::permute(t, {0, 2, 1, 3});
            return ag::reshape(t, {B * heads, N, dh});
        };
        q = split(q, Nq);
        k = split(k, Nk);
        v = split(v, Nk);
        Var scores = ag::bmm(q, k, true);
        scores = ag::scale(scores, 1.0 / std::sqrt((double)dh));
        if (masked && key_bias_) scores = ag::add_key_bias(scores, *key_bias_, heads);
        Var probs = ag::softmax_last(scores);
        Var out = ag::bmm(probs, v);
        out = ag::reshape(out, {B, heads, Nq, dh});
        out = ag::permute(out, {0, 2, 1, 3});
        out = ag::reshape(out, {B, Nq, heads * dh});
        return ag::linear(out, p(prefix + ".wo"), p(prefix + ".bo"));
    }

    Var transformer_block(Var x, const std::string& prefix, Var ctx, Var cvec) {
        const CoreConfig& k = cfg_->core;
        Var t = ag::layer_norm(x, p(prefix + ".ln1.g"), p(prefix + ".ln1.b"));
        t = film_from(t, cvec, prefix, k.hidden_size);
        x = ag::add(x, attention(t, t, prefix + ".attn", k.num_heads, false));
        t = ag::layer_norm(x, p(prefix + ".ln2.g"), p(prefix + ".ln2.b"));
        x = ag::add(x, attention(t, ctx, prefix + ".xattn", k.num_heads, true));
        t = ag::layer_norm(x, p(prefix + ".ln3.g"), p(prefix + ".ln3.b"));
        t = ag::linear(t, p(prefix + ".mlp1.w"), p(prefix + ".mlp1.b"));
        t = ag::swish(t);
        t = ag::linear(t, p(prefix + ".mlp2.w"), p(prefix + ".mlp2.b"));
        return ag::add(x, t);
    }

    Var entry_stages(Var x, const std::vector<EntryStage>& plan) {
        for (size_t i = 0; i < plan.size(); i++) {
            if (i > 0) x = ag::swish(x);
            std::string base = "entry.stage" + std::to_string(i) + ".conv.";
            x = ag::conv2d(x, p(base + "w"), p(base + "b"), plan[i].stride, 1);
        }
        return x;
    }

    Var out_head(Var x, int levels) {
        for (int j = 0; j < levels; j++) {
            x = ag::upsample_nn2(x);
            std::string base = "out_head.level" + std::to_string(j) + ".conv.";
            x = ag::conv2d(x, p(base + "w"), p(base + "b"), 1, 1);
            x = ag::swish(x);
        }
        return ag::conv2d(x, p("out_head.out.conv.w"), p("out_head.out.conv.b"), 1, 1);
    }

    Var shallow(Var z, Var ctx, Var cvec) {
        const ModelConfig& c = *cfg_;
        int h = c.core.hidden_size;
        int reduction = c.shallow_input_resolution / c.core.grid;
        int levels = 0;
        for (int r = reduction; r > 1; r /= 2) levels++;
        Var x = entry_stages(z, entry_plan(reduction, c.shallow_entry_channels, h));
        x = res_block(x, "shallow_encoder.res0", h, h, h, cvec);
        x = core(x, ctx, cvec);
        x = res_block(x, "shallow_decoder.res0", h, h, h, cvec);
        return out_head(x, levels);
    }

    Var grown(Var z, Var ctx, Var cvec) {
        const ModelConfig& c = *cfg_;
        const EncoderDecoderConfig& e = *c.encdec;
        int L = (int)e.channels_per_level.size();
        int entry_levels = 0;
        for (int r = e.entry_reduction; r > 1; r /= 2) entry_levels++;
        Var x = entry_stages(z, entry_plan(e.entry_reduction, e.channels_per_level[0],
                                           e.channels_per_level[0]));
        std::vector<Var> skips(L);
        for (int i = 0; i < L; i++) {
            int ch = e.channels_per_level[i];
            for (int j = 0; j < e.res_blocks_per_level[i]; j++) {
                std::string prefix = "encoder.l" + std::to_string(i) + "r" + std::to_string(j);
                x = res_block(x, prefix, ch, ch, ch, cvec);
            }
            skips[i] = x;
            if (i + 1 < L) {
                std::string base = "encoder.l" + std::to_string(i) + ".down.";
                x = ag::avg_pool2(x);
                x = ag::conv2d(x, p(base + "w"), p(base + "b"), 1, 0);  // 1x1 projection
            }
        }
        x = ag::avg_pool2(x);
        x = ag::conv2d(x, p("encoder.bridge.down.w"), p("encoder.bridge.down.b"), 1, 0);
        x = core(x, ctx, cvec);
        x = ag::upsample_nn2(x);
        x = ag::conv2d(x, p("decoder.bridge.up.w"), p("decoder.bridge.up.b"), 1, 0);  // 1x1
        for (int i = L - 1; i >= 0; i--) {
            int ch = e.channels_per_level[i];
            x = ag::concat<T>({x, skips[i]}, -1);
            for (int j = 0; j < e.res_blocks_per_level[i]; j++) {
                std::string prefix = "decoder.l" + std::to_string(i) + "r" + std::to_string(j);
                int in_ch = (j == 0) ? 2 * ch : ch;
                x = res_block(x, prefix, in_ch, ch, ch, cvec);
            }
            if (i > 0) {
                x = ag::upsample_nn2(x);
                std::string base = "decoder.l" + std::to_string(i) + ".up.";
                x = ag::conv2d(x, p(base + "w"), p(base + "b"), 1, 0);  // 1x1 after upsample
            }
        }
        return out_head(x, entry_levels);
    }

    GraphT<T>* g_;
    const ParameterTreeT<T>* tree_;
    const ModelConfig* cfg_;
    const std::set<std::string>* frozen_;
    const TensorT<T>* key_bias_ = nullptr;
    std::map<std::string, Var> cache_;
};

// convenience wrapper matching the operation contract
template <typename T>
ag::Var<T> model_forward(GraphT<T>& g, const ParameterTreeT<T>& tree, const ModelConfig& cfg,
                         ag::Var<T> z, const std::vector<double>& t_batch, const BatchCond<T>& cond,
                         const std::set<std::string>* frozen = nullptr) {
    ModelForward<T> f(g, tree, cfg, frozen);
    return f.run(z, t_batch, cond);
}

}  // namespace pxd

#endif
