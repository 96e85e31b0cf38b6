#include "pixeldiff/conditioning.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

namespace pxd {

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        if (std::isalnum((unsigned char)ch)) {
            cur += (char)std::tolower((unsigned char)ch);
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

LookupEncoder::LookupEncoder(TextEncoderSpec spec, std::vector<std::string> vocab)
    : spec_(std::move(spec)), vocab_(std::move(vocab)) {
    for (size_t i = 0; i < vocab_.size(); i++) index_[vocab_[i]] = (int)i;
    Rng rng(spec_.seed ^ fnv1a64(spec_.name));
    table_ = randn<Real>({(int)vocab_.size() + 1, spec_.embed_dim}, rng, 1.0);
}

EmbeddingSequence LookupEncoder::encode(const std::string& prompt) const {
    EmbeddingSequence s;
    s.source = spec_.name;
    s.vectors = Tensor::zeros({spec_.seq_len, spec_.embed_dim});
    s.mask.assign(spec_.seq_len, 0);
    std::vector<std::string> toks = tokenize(prompt);
    int n = std::min((int)toks.size(), spec_.seq_len);
    int D = spec_.embed_dim;
    for (int i = 0; i < n; i++) {
        auto it = index_.find(toks[i]);
        int id = (it == index_.end()) ? (int)vocab_.size() : it->second;
        for (int d = 0; d < D; d++) s.vectors.at((int64_t)i * D + d) = table_.at((int64_t)id * D + d);
        s.mask[i] = 1;
    }
    return s;
}

EmbeddingSequence TrigramHashEncoder::encode(const std::string& prompt) const {
    EmbeddingSequence s;
    s.source = spec_.name;
    s.vectors = Tensor::zeros({spec_.seq_len, spec_.embed_dim});
    s.mask.assign(spec_.seq_len, 0);
    std::string padded = "^";
    for (char ch : prompt) padded += (char)std::tolower((unsigned char)ch);
    padded += "$";
    int n = std::max(0, (int)padded.size() - 2);
    n = std::min(n, spec_.seq_len);
    int D = spec_.embed_dim;
    for (int i = 0; i < n; i++) {
        for (uint64_t salt = 0; salt < 3; salt++) {
            uint64_t h = fnv1a64(padded.data() + i, 3, 0xcbf29ce484222325ull ^ salt);
            s.vectors.at((int64_t)i * D + (int64_t)(h % (uint64_t)D)) += 1.0f;
        }
        s.mask[i] = 1;
    }
    return s;
}

std::vector<std::string> load_vocab(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open vocab file: " + path);
    std::vector<std::string> vocab;
    std::string line;
    while (std::getline(f, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        vocab.push_back(line);
    }
    return vocab;
}

const std::vector<std::string>& default_vocab() {
    static const std::vector<std::string> v = {
        "a",         "an",     "and",     "one",       "two",     "three",    "four",
        "five",      "red",    "green",   "blue",      "yellow",  "purple",   "orange",
        "cyan",      "white",  "black",   "gray",      "circle",  "circles",  "square",
        "squares",   "triangle", "triangles", "on",    "background"};
    return v;
}

std::unique_ptr<TextEncoder> make_encoder(const TextEncoderSpec& spec) {
    if (spec.type == "lookup") {
        std::vector<std::string> vocab =
            spec.vocab_path.empty() ? default_vocab() : load_vocab(spec.vocab_path);
        return std::make_unique<LookupEncoder>(spec, std::move(vocab));
    }
    if (spec.type == "trigram") return std::make_unique<TrigramHashEncoder>(spec);
    throw std::invalid_argument("unknown text encoder type: " + spec.type);
}

std::vector<std::unique_ptr<TextEncoder>> make_encoders(const ModelConfig& cfg) {
    std::vector<std::unique_ptr<TextEncoder>> out;
    for (const auto& e : cfg.encoders) out.push_back(make_encoder(e));
    return out;
}

EmbeddingSequence concat_encoders(const std::vector<EmbeddingSequence>& seqs,
                                  const std::vector<Tensor>& proj_w,
                                  const std::vector<Tensor>& proj_b) {
    if (seqs.empty()) throw std::invalid_argument("concat_encoders: no sequences");
    if (proj_w.size() != seqs.size() || proj_b.size() != seqs.size())
        throw std::invalid_argument("concat_encoders: one projection per sequence required");
    int width = proj_w[0].shape[1];
    int total = 0;
    for (const auto& s : seqs) total += s.length();
    EmbeddingSequence out;
    out.source = "concat";
    out.vectors = Tensor::zeros({total, width});
    out.mask.assign(total, 0);
    int row0 = 0;
    for (size_t k = 0; k < seqs.size(); k++) {
        const EmbeddingSequence& s = seqs[k];
        const Tensor& w = proj_w[k];
        const Tensor& b = proj_b[k];
        if (w.shape[0] != s.dim() || w.shape[1] != width)
            throw std::invalid_argument("concat_encoders: projection shape mismatch for " + s.source);
        int L = s.length(), D = s.dim();
        for (int l = 0; l < L; l++) {
            for (int j = 0; j < width; j++) {
                double acc = b.at(j);
                for (int d = 0; d < D; d++)
                    acc += (double)s.vectors.at((int64_t)l * D + d) * w.at((int64_t)d * width + j);
                out.vectors.at((int64_t)(row0 + l) * width + j) = (Real)acc;
            }
            out.mask[row0 + l] = s.mask[l];
        }
        row0 += L;
    }
    return out;
}

EmbeddingSequence null_condition(const ParameterTree& tree) {
    const Tensor& n = tree.at("text_enc.null.emb.w");
    EmbeddingSequence s;
    s.source = "null";
    s.vectors = n.clone();
    s.mask.assign(n.shape[0], 1);
    return s;
}

EmbeddingSequence drop_condition(const EmbeddingSequence& seq, const EmbeddingSequence& null_seq,
                                 double p_drop, uint64_t rng_seed) {
    if (p_drop < 0.0 || p_drop > 1.0)
        throw std::invalid_argument("drop_condition: p_drop must be in [0,1]");
    Rng rng(rng_seed);
    return (rng.uniform() < p_drop) ? null_seq : seq;
}

}  // namespace pxd
