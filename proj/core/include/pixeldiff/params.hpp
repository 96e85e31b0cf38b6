#ifndef PIXELDIFF_PARAMS_HPP
#define PIXELDIFF_PARAMS_HPP

#include <map>
#include <set>
#include <string>

#include "pixeldiff/config.hpp"
#include "pixeldiff/tensor.hpp"

namespace pxd {

// Named, shaped parameter collection. Names follow the grammar
// <group>.<block>.<layer>.<leaf> with group one of {text_enc, core, time_enc,
// entry, shallow_encoder, shallow_decoder, out_head, encoder, decoder}.
template <typename T>
struct ParameterTreeT {
    std::map<std::string, TensorT<T>> entries;  // ordered -> deterministic iteration
    std::set<std::string> frozen;
    json metadata;  // phase tag, fingerprints, seeds, training mode, ...

    TensorT<T>& at(const std::string& name) {
        auto it = entries.find(name);
        if (it == entries.end()) throw std::out_of_range("parameter not found: " + name);
        return it->second;
    }
    const TensorT<T>& at(const std::string& name) const {
        auto it = entries.find(name);
        if (it == entries.end()) throw std::out_of_range("parameter not found: " + name);
        return it->second;
    }
    bool has(const std::string& name) const { return entries.count(name) > 0; }
    bool is_frozen(const std::string& name) const { return frozen.count(name) > 0; }

    int64_t total_params() const {
        int64_t n = 0;
        for (const auto& [k, v] : entries) n += v.numel();
        return n;
    }

    static std::string group_of(const std::string& name) {
        return name.substr(0, name.find('.'));
    }
};

using ParameterTree = ParameterTreeT<Real>;

// true iff the name has exactly four non-empty dot segments and a known group
bool valid_param_name(const std::string& name);
void validate_tree_names(const ParameterTree& tree);

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Single-file container: magic, version, JSON manifest (meta + per-tensor
// name/shape/dtype/offset/frozen), then raw little-endian float32 arrays.
// Round-trips are bit-exact.
void save_checkpoint(const std::string& path, const ParameterTree& tree);
ParameterTree load_checkpoint(const std::string& path);

}  // namespace pxd

#endif
