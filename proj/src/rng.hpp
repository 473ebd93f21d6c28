#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace slimfl::rng {

// SplitMix64 finalizer. Used both as the key-derivation hash and as the
// per-counter output function, so every draw is a pure function of
// (seed, purpose, subkeys..., counter) and independent of scheduling.
constexpr std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t hash_tag(std::string_view tag);

// Counter-based stream. Draws are seekable and never depend on shared state.
class Stream {
  public:
    explicit Stream(std::uint64_t key) : key_(key) {}

    std::uint64_t next_u64() { return mix(key_ ^ counter_++ * 0xd1b54a32d192ed03ULL); }

    // Uniform in [0, 1), 53-bit resolution.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Unit-mean exponential (Rayleigh fading power gain): g = -ln(1 - U).
    double next_exponential();

    // Standard normal via Box-Muller; second value cached.
    double next_normal();

    double next_normal(double mean, double stddev) { return mean + stddev * next_normal(); }

    // Unbiased integer in [0, n) by rejection on the top range.
    std::uint64_t next_below(std::uint64_t n);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    bool have_cached_normal_ = false;
    double cached_normal_ = 0.0;
};

// Derives an independent stream from (seed, purpose, a, b, c). All randomness
// in the artifact flows through here.
Stream stream(std::uint64_t seed, std::string_view purpose, std::uint64_t a = 0,
              std::uint64_t b = 0, std::uint64_t c = 0);

}  // namespace slimfl::rng
