#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "sslhar/tensor.hpp"

namespace sslhar {

/// Counter-based seeded generator (splitmix64 core). Identical seeds produce
/// identical draw sequences on every platform, which the reproducibility
/// contract depends on; the platform engines make no such promise.
///
/// Single-owner: not safe to share across threads. Independent substreams for
/// different purposes come from fork(), which derives from the original seed
/// only, so substreams never depend on how much the parent has drawn.
class Rng {
public:
    explicit Rng(uint64_t seed);

    uint64_t next_u64();

    /// Uniform in [0, 1).
    double uniform();

    /// Uniform integer in [0, n), n >= 1.
    int uniform_int(int n);

    /// Standard normal via Box-Muller (two u64 draws per sample, no cache).
    double normal();

    /// i.i.d. N(0, sigma^2) samples; sigma = 0 yields exact zeros without
    /// consuming any state. Negative sigma throws.
    Tensor gaussian(std::vector<int> shape, double sigma);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            const int j = uniform_int(i + 1);
            std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
        }
    }

    /// Derives an independent stream keyed by tag; depends on the seed and tag
    /// only, never on draws already made from this generator.
    Rng fork(std::string_view tag) const;

    uint64_t seed() const { return seed_; }
    uint64_t state() const { return state_; }
    void set_state(uint64_t state) { state_ = state; }

private:
    uint64_t seed_;
    uint64_t state_;
};

/// FNV-1a, used for deterministic stream derivation from names.
uint64_t hash_tag(std::string_view tag);

}  // namespace sslhar
