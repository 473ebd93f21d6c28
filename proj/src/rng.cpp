#include "rng.hpp"

#include <cmath>

namespace slimfl::rng {

std::uint64_t hash_tag(std::string_view tag) {
    // FNV-1a, then one mixing round to spread short tags.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return mix(h);
}

double Stream::next_exponential() { return -std::log(1.0 - next_unit()); }

double Stream::next_normal() {
    if (have_cached_normal_) {
        have_cached_normal_ = false;
        return cached_normal_;
    }
    double u1 = next_unit();
    double u2 = next_unit();
    // Guard against log(0).
    while (u1 == 0.0) u1 = next_unit();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    cached_normal_ = r * std::sin(a);
    have_cached_normal_ = true;
    return r * std::cos(a);
}

std::uint64_t Stream::next_below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = ~0ULL - ~0ULL % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
}

Stream stream(std::uint64_t seed, std::string_view purpose, std::uint64_t a, std::uint64_t b,
              std::uint64_t c) {
    std::uint64_t k = mix(seed);
    k = mix(k ^ hash_tag(purpose));
    k = mix(k ^ a);
    k = mix(k ^ b);
    k = mix(k ^ c);
    return Stream(k);
}

}  // namespace slimfl::rng
