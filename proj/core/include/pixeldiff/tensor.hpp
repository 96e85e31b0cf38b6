#ifndef PIXELDIFF_TENSOR_HPP
#define PIXELDIFF_TENSOR_HPP

#include <cstdint>
#include <cmath>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace pxd {

// Build-wide scalar for the production pipeline. The math stack is templated
// so tests can instantiate the same code in double for finite-difference
// gradient checks.
using Real = float;

inline int64_t shape_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); i++) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

// Dense nd-array. The buffer is shared so reshapes and tree copies are cheap;
// ops never write through a shared buffer (they allocate fresh ones), and
// in-place mutation goes through data() on tensors the caller owns.
template <typename T>
struct TensorT {
    std::vector<int> shape;
    std::shared_ptr<std::vector<T>> buf;

    TensorT() = default;
    explicit TensorT(std::vector<int> s)
        : shape(std::move(s)), buf(std::make_shared<std::vector<T>>(shape_numel(shape))) {}
    TensorT(std::vector<int> s, T fill)
        : shape(std::move(s)), buf(std::make_shared<std::vector<T>>(shape_numel(shape), fill)) {}

    static TensorT zeros(std::vector<int> s) { return TensorT(std::move(s)); }
    static TensorT full(std::vector<int> s, T v) { return TensorT(std::move(s), v); }

    int64_t numel() const { return buf ? (int64_t)buf->size() : 0; }
    bool empty() const { return !buf; }
    int dim(int i) const { return shape[(i < 0) ? (int)shape.size() + i : i]; }
    int ndim() const { return (int)shape.size(); }

    T* data() { return buf->data(); }
    const T* data() const { return buf->data(); }
    T& at(int64_t i) { return (*buf)[i]; }
    T at(int64_t i) const { return (*buf)[i]; }

    // same buffer, new shape
    TensorT reshaped(std::vector<int> s) const {
        if (shape_numel(s) != numel())
            throw std::invalid_argument("reshape: numel mismatch " + shape_str(shape) + " -> " + shape_str(s));
        TensorT t;
        t.shape = std::move(s);
        t.buf = buf;
        return t;
    }

    TensorT clone() const {
        TensorT t;
        t.shape = shape;
        t.buf = std::make_shared<std::vector<T>>(*buf);
        return t;
    }

    template <typename U>
    TensorT<U> cast() const {
        TensorT<U> t;
        t.shape = shape;
        t.buf = std::make_shared<std::vector<U>>(numel());
        for (int64_t i = 0; i < numel(); i++) (*t.buf)[i] = (U)(*buf)[i];
        return t;
    }

    bool same_shape(const TensorT& o) const { return shape == o.shape; }
};

using Tensor = TensorT<Real>;

// ---------------------------------------------------------------------------
// Deterministic RNG. std::mt19937 distributions are implementation-defined,
// so seeding, uniform and normal draws are all hand-rolled to keep
// checkpoints and trajectories reproducible for a given binary.
// ---------------------------------------------------------------------------

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline uint64_t fnv1a64(const void* data, size_t n, uint64_t seed = 0xcbf29ce484222325ull) {
    const uint8_t* p = (const uint8_t*)data;
    uint64_t h = seed;
    for (size_t i = 0; i < n; i++) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a64(const std::string& s, uint64_t seed = 0xcbf29ce484222325ull) {
    return fnv1a64(s.data(), s.size(), seed);
}

class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64(sm);
        has_spare_ = false;
    }

    // derive an independent stream, e.g. one per parameter name
    Rng fork(uint64_t salt) const {
        uint64_t mix = s_[0] ^ (salt * 0x9e3779b97f4a7c15ull) ^ (s_[3] << 1);
        return Rng(mix);
    }
    Rng fork(const std::string& name) const { return fork(fnv1a64(name)); }

    uint64_t next_u64() {
        // xoshiro256++
        uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // uniform in [0,1)
    double uniform() { return (double)(next_u64() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    int64_t uniform_int(int64_t n) { return (int64_t)(uniform() * (double)n); }

    // Marsaglia polar method
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = uniform() * 2.0 - 1.0;
            v = uniform() * 2.0 - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        double k = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * k;
        has_spare_ = true;
        return u * k;
    }

    // normal truncated to +/- 2 sigma (resampled)
    double truncated_normal(double stddev) {
        double x;
        do {
            x = normal();
        } while (std::fabs(x) > 2.0);
        return x * stddev;
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    uint64_t s_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

template <typename T>
TensorT<T> randn(std::vector<int> shape, Rng& rng, double stddev = 1.0) {
    TensorT<T> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); i++) t.at(i) = (T)(rng.normal() * stddev);
    return t;
}

template <typename T>
TensorT<T> truncated_normal(std::vector<int> shape, Rng& rng, double stddev) {
    TensorT<T> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); i++) t.at(i) = (T)rng.truncated_normal(stddev);
    return t;
}

}  // namespace pxd

#endif
