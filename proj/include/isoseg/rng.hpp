#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace isoseg {

// All randomness in the project flows through this wrapper. std::mt19937_64's
// engine stream is standardized, but the std distributions are not, so the
// distributions here are hand-rolled to keep runs bit-identical across
// standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed), eng_(seed) {}

    uint64_t seed() const { return seed_; }

    uint64_t next_u64() { return eng_(); }

    // Uniform in [0,1) with 53-bit resolution.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    // Inclusive bounds.
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(uniform() * (static_cast<double>(hi) - lo + 1.0));
    }

    // Standard normal via Box-Muller; one value per call, no cached state so
    // the engine stream alone captures the generator state.
    float normal() {
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        return static_cast<float>(std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2));
    }

    // Deterministic derived stream; tag namespaces independent uses of the seed.
    Rng child(uint64_t tag) const { return Rng(splitmix64(seed_ ^ (0x9E3779B97F4A7C15ULL * (tag + 1)))); }

    std::string serialize() const {
        std::ostringstream os;
        os << eng_;
        return os.str();
    }

    void deserialize(const std::string& s) {
        std::istringstream is(s);
        is >> eng_;
    }

    static uint64_t splitmix64(uint64_t x) {
        x += 0x9E3779B97F4A7C15ULL;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    }

    // Stable 64-bit string hash (FNV-1a), used for tags and config hashes.
    static uint64_t fnv1a(const std::string& s) {
        uint64_t h = 0xcbf29ce484222325ULL;
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        return h;
    }

private:
    uint64_t seed_ = 0;
    std::mt19937_64 eng_;
};

} // namespace isoseg
