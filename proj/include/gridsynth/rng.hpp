#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace gridsynth {

// Independent purposes drawing from the same (scenario, topology) cell.
enum class Stream : std::uint64_t { Load = 1, Admittance = 2, Topology = 3, Cost = 4, Test = 5 };

inline constexpr std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Counter-based generator. Every draw is a pure function of (key, counter),
// so output is identical on every platform and independent of which thread
// consumes it. The std distributions are avoided on purpose: their output
// differs between standard library implementations.
class Rng {
  public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t key) : key_(key) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() { return splitmix64(key_ ^ splitmix64(counter_++)); }

    // Uniform on the open interval (0, 1).
    double uniform01() {
        return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
    }

    // Uniform on (lo, hi); returns lo when the interval is empty.
    double uniform(double lo, double hi) {
        if (!(hi > lo)) {
            return lo;
        }
        const double x = lo + (hi - lo) * uniform01();
        if (x <= lo) {
            return std::nextafter(lo, hi);
        }
        if (x >= hi) {
            return std::nextafter(hi, lo);
        }
        return x;
    }

    // Uniform on {0, ..., n-1}, unbiased. n must be > 0.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = max() - max() % n;
        std::uint64_t x = 0;
        do {
            x = (*this)();
        } while (x >= limit);
        return x % n;
    }

  private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

inline Rng derive_scenario_rng(std::uint64_t seed, std::uint64_t scenario, std::uint64_t topology,
                               Stream stream = Stream::Load) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ scenario);
    h = splitmix64(h ^ (topology * 0xd1b54a32d192ed03ULL));
    h = splitmix64(h ^ static_cast<std::uint64_t>(stream));
    return Rng(h);
}

}  // namespace gridsynth
