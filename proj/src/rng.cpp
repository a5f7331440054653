#include "sslhar/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace sslhar {

namespace {

uint64_t splitmix64(uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

uint64_t hash_tag(std::string_view tag) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

Rng::Rng(uint64_t seed) : seed_(seed), state_(seed) {}

uint64_t Rng::next_u64() { return splitmix64(state_); }

double Rng::uniform() {
    // 53-bit mantissa construction, uniform in [0, 1).
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

int Rng::uniform_int(int n) {
    if (n < 1) throw std::invalid_argument("uniform_int: n must be >= 1");
    // Rejection sampling keeps the distribution exact for every n.
    const uint64_t un = static_cast<uint64_t>(n);
    const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return static_cast<int>(x % un);
}

double Rng::normal() {
    // Box-Muller; u1 shifted away from zero so log stays finite.
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Tensor Rng::gaussian(std::vector<int> shape, double sigma) {
    if (sigma < 0.0) throw std::invalid_argument("gaussian: sigma must be >= 0");
    Tensor t(std::move(shape));
    if (sigma == 0.0) return t;
    for (int64_t i = 0; i < t.size(); ++i) t[i] = sigma * normal();
    return t;
}

Rng Rng::fork(std::string_view tag) const {
    uint64_t s = seed_ ^ hash_tag(tag);
    // One mixing round decorrelates nearby seeds/tags.
    uint64_t mixer = s;
    return Rng(splitmix64(mixer));
}

}  // namespace sslhar
