#ifndef PIXELDIFF_CONDITIONING_HPP
#define PIXELDIFF_CONDITIONING_HPP

#include <memory>
#include <string>
#include <vector>

#include "pixeldiff/architecture.hpp"
#include "pixeldiff/config.hpp"
#include "pixeldiff/params.hpp"
#include "pixeldiff/tensor.hpp"

namespace pxd {

// Fixed-length sequence of conditioning vectors plus a validity mask.
struct EmbeddingSequence {
    Tensor vectors;              // [L, dim]
    std::vector<uint8_t> mask;   // 1 = valid, 0 = padding
    std::string source;

    int length() const { return vectors.shape[0]; }
    int dim() const { return vectors.shape[1]; }
};

// Deterministic prompt -> embedding sequence. Real pretrained encoders are
// adapters behind this interface; two toy implementations ship with the
// framework.
class TextEncoder {
public:
    virtual ~TextEncoder() = default;
    virtual const TextEncoderSpec& spec() const = 0;
    virtual EmbeddingSequence encode(const std::string& prompt) const = 0;
};

// whitespace/punctuation tokenizer over a vocabulary file (one token per
// line, line number = token id); embeddings are a seeded fixed table
class LookupEncoder : public TextEncoder {
public:
    LookupEncoder(TextEncoderSpec spec, std::vector<std::string> vocab);
    const TextEncoderSpec& spec() const override { return spec_; }
    EmbeddingSequence encode(const std::string& prompt) const override;
    int vocab_size() const { return (int)vocab_.size(); }

private:
    TextEncoderSpec spec_;
    std::vector<std::string> vocab_;
    std::map<std::string, int> index_;
    Tensor table_;  // [vocab+1, dim], last row = unknown token
};

// character-trigram hashing: position i embeds the i-th trigram of
// "^" + lowercase(prompt) + "$" by bumping three fnv1a hash buckets
class TrigramHashEncoder : public TextEncoder {
public:
    explicit TrigramHashEncoder(TextEncoderSpec spec) : spec_(std::move(spec)) {}
    const TextEncoderSpec& spec() const override { return spec_; }
    EmbeddingSequence encode(const std::string& prompt) const override;

private:
    TextEncoderSpec spec_;
};

std::vector<std::string> load_vocab(const std::string& path);
// caption vocabulary of the toy shapes dataset; used when no vocab file is given
const std::vector<std::string>& default_vocab();

std::unique_ptr<TextEncoder> make_encoder(const TextEncoderSpec& spec);
std::vector<std::unique_ptr<TextEncoder>> make_encoders(const ModelConfig& cfg);

std::vector<std::string> tokenize(const std::string& text);

// Projects each sequence into the shared width and concatenates along the
// sequence axis. Masked positions stay masked. Reference (non-autodiff) path;
// the in-graph projection in ModelForward computes the same map.
EmbeddingSequence concat_encoders(const std::vector<EmbeddingSequence>& seqs,
                                  const std::vector<Tensor>& proj_w,
                                  const std::vector<Tensor>& proj_b);

// the learned null sequence from a parameter tree
EmbeddingSequence null_condition(const ParameterTree& tree);

// with probability p_drop returns the null sequence, else seq; deterministic per seed
EmbeddingSequence drop_condition(const EmbeddingSequence& seq, const EmbeddingSequence& null_seq,
                                 double p_drop, uint64_t rng_seed);

// Batched conditioning inputs for the model forward. null_sel marks samples
// conditioned on the learned null sequence (their key bias rows are zero).
template <typename T>
BatchCond<T> make_batch_cond(const std::vector<std::unique_ptr<TextEncoder>>& encoders,
                             const std::vector<std::string>& prompts,
                             const std::vector<uint8_t>& null_sel) {
    int B = (int)prompts.size();
    BatchCond<T> bc;
    bc.null_sel = null_sel.empty() ? std::vector<uint8_t>(B, 0) : null_sel;
    int total_len = 0;
    for (const auto& e : encoders) total_len += e->spec().seq_len;
    bc.key_bias = TensorT<T>::zeros({B, total_len});
    for (const auto& enc : encoders) {
        int L = enc->spec().seq_len, D = enc->spec().embed_dim;
        bc.seqs.push_back(TensorT<T>::zeros({B, L, D}));
    }
    int col0 = 0;
    for (size_t k = 0; k < encoders.size(); k++) {
        int L = encoders[k]->spec().seq_len, D = encoders[k]->spec().embed_dim;
        for (int b = 0; b < B; b++) {
            EmbeddingSequence s = encoders[k]->encode(prompts[b]);
            for (int l = 0; l < L; l++) {
                for (int d = 0; d < D; d++)
                    bc.seqs[k].at(((int64_t)b * L + l) * D + d) = (T)s.vectors.at((int64_t)l * D + d);
                bool attendable = bc.null_sel[b] || s.mask[l];
                if (!attendable) bc.key_bias.at((int64_t)b * total_len + col0 + l) = (T)-1e9;
            }
        }
        col0 += L;
    }
    return bc;
}

}  // namespace pxd

#endif
