#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace tailreg {

// Derives independent substream seeds from a base seed and a task index.
// Used so that replication k always sees the same stream regardless of how
// work is scheduled across threads.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d4a7b4c7e49db1ULL;
    return x ^ (x >> 31);
}

inline std::uint64_t substream_seed(std::uint64_t base_seed, std::uint64_t task_index) {
    return splitmix64(base_seed ^ splitmix64(task_index));
}

// Deterministic double-precision RNG over mt19937_64. Uniform doubles use the
// top 53 bits; normals use Box-Muller. Identical seeds give identical streams
// on any platform with the same libm.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Uniform on [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform on (0, 1); rejects the measure-zero 0 draw.
    double uniform_open() {
        double u;
        do {
            u = uniform();
        } while (u == 0.0);
        return u;
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform_open();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    std::uint64_t raw() { return engine_(); }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace tailreg
