#pragma once

#include <cmath>
#include <cstdint>

namespace eqlift {

// Counter-based deterministic random stream. Every draw is a pure function
// of (seed, counter), so a copy of the stream replays the exact sequence and
// state can be checkpointed as two integers.
class RngStream {
  public:
    explicit RngStream(std::uint64_t seed = 0, std::uint64_t counter = 0)
        : seed_(seed), counter_(counter) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }
    void set_counter(std::uint64_t c) { counter_ = c; }

    std::uint64_t next_u64() {
        return mix(seed_ + 0x9E3779B97F4A7C15ULL * ++counter_);
    }

    // Uniform on [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; consumes two draws.
    double gaussian() {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

    // Independent stream for worker `id`; never shares draws with the parent.
    RngStream substream(std::uint64_t id) const {
        return RngStream(mix(seed_ ^ mix(id + 0x632BE59BD9B4E019ULL)));
    }

  private:
    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ULL;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBULL;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t seed_;
    std::uint64_t counter_;
};

}  // namespace eqlift
