#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace gridpose {

/// Dense row-major array of 64-bit reals. `grad`, when non-empty, matches
/// the value buffer element for element.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> v;
    std::vector<double> grad;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), v(static_cast<size_t>(numel_of(shape)), 0.0) {}
    Tensor(std::vector<int> s, std::vector<double> values) : shape(std::move(s)), v(std::move(values)) {
        if (static_cast<int64_t>(v.size()) != numel_of(shape))
            throw std::invalid_argument("tensor: value count does not match shape");
    }

    static int64_t numel_of(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) {
            if (d < 0) throw std::invalid_argument("tensor: negative dimension");
            n *= d;
        }
        return n;
    }

    static Tensor full(std::vector<int> s, double value) {
        Tensor t(std::move(s));
        std::fill(t.v.begin(), t.v.end(), value);
        return t;
    }
    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

    int64_t numel() const { return static_cast<int64_t>(v.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape.size()); }

    double& at(int i) { return v[static_cast<size_t>(i)]; }
    double at(int i) const { return v[static_cast<size_t>(i)]; }
    double& at(int i, int j) {
        assert(ndim() == 2);
        return v[static_cast<size_t>(i) * shape[1] + j];
    }
    double at(int i, int j) const {
        assert(ndim() == 2);
        return v[static_cast<size_t>(i) * shape[1] + j];
    }
    double& at(int i, int j, int k) {
        assert(ndim() == 3);
        return v[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
    }
    double at(int i, int j, int k) const {
        assert(ndim() == 3);
        return v[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
    }
    double& at(int i, int j, int k, int l) {
        assert(ndim() == 4);
        return v[((static_cast<size_t>(i) * shape[1] + j) * shape[2] + k) * shape[3] + l];
    }
    double at(int i, int j, int k, int l) const {
        assert(ndim() == 4);
        return v[((static_cast<size_t>(i) * shape[1] + j) * shape[2] + k) * shape[3] + l];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void ensure_grad() {
        if (grad.size() != v.size()) grad.assign(v.size(), 0.0);
    }
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }
};

inline void require_finite(const Tensor& t, const char* what) {
    if (!t.all_finite()) throw std::runtime_error(std::string("non-finite values in ") + what);
}

inline std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

/// Counter-based deterministic generator (splitmix64 stream). All stochastic
/// operations in the library draw from an explicitly passed Rng so runs are
/// reproducible from a single seed. `stream` partitions the seed space, e.g.
/// one independent stream per generated sample.
class Rng {
public:
    explicit Rng(uint64_t seed, uint64_t stream = 0)
        : state_(mix64(seed + 0x9e3779b97f4a7c15ull) ^ mix64(stream * 0xda942042e4dd58b5ull + 1)) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform in the open interval (0,1).
    double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * (1.0 / 9007199254740992.0); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Integer in [0, n). n must be positive.
    int uniform_int(int n) {
        assert(n > 0);
        return static_cast<int>(next_u64() % static_cast<uint64_t>(n));
    }

    /// Standard Gumbel(0,1) variate.
    double gumbel() { return -std::log(-std::log(uniform())); }

    /// Standard normal via Box-Muller (one spare cached).
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform(), u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * M_PI * u2);
        have_spare_ = true;
        return r * std::cos(2.0 * M_PI * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (int i = static_cast<int>(items.size()) - 1; i > 0; --i) {
            int j = uniform_int(i + 1);
            std::swap(items[static_cast<size_t>(i)], items[static_cast<size_t>(j)]);
        }
    }

private:
    static uint64_t mix64(uint64_t z) {
        z = (z ^ (z >> 33)) * 0xff51afd7ed558ccdull;
        z = (z ^ (z >> 33)) * 0xc4ceb9fe1a85ec53ull;
        return z ^ (z >> 33);
    }

    uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace gridpose
