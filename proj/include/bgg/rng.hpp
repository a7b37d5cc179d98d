#pragma once
// Deterministic, serializable random streams. All randomness in the project
// flows through Rng so that runs replay bit-exactly across platforms.

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace bgg {

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

class Rng {
public:
    Rng() : state_(0x853c49e6748fea9bULL) {}
    explicit Rng(uint64_t seed) : state_(seed ^ 0x853c49e6748fea9bULL) {}

    uint64_t next_u64() { return splitmix64(state_); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    uint64_t uniform_index(uint64_t n) {
        return n == 0 ? 0 : next_u64() % n;
    }

    // Box-Muller; draws two uniforms per call so the stream state never
    // carries a cached half-sample (keeps serialization to one word).
    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    // Independent child stream identified by a tag; the parent state is not
    // advanced, so forks are reproducible regardless of call order.
    Rng fork(std::string_view tag) const {
        uint64_t s = state_;
        uint64_t h = fnv1a64(tag);
        uint64_t mix = s ^ (h + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2));
        return Rng::from_raw_state(mix);
    }

    Rng fork(uint64_t tag) const {
        uint64_t s = state_;
        uint64_t mix = s ^ (tag * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL);
        return Rng::from_raw_state(mix);
    }

    uint64_t raw_state() const { return state_; }
    static Rng from_raw_state(uint64_t s) {
        Rng r;
        r.state_ = s;
        return r;
    }

private:
    uint64_t state_;
};

// Fisher-Yates with draws from the given stream.
template <typename T, typename Vec = std::vector<T>>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (size_t i = v.size(); i > 1; --i) {
        size_t j = static_cast<size_t>(rng.uniform_index(i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace bgg
