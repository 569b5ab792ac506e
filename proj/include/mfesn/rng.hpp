#pragma once

#include <array>
#include <cstdint>

namespace mfesn {

// splitmix64 step; also used to hash seed material into generator state.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// xoshiro256** with splitmix64 seeding. All experiment randomness goes
// through this generator so runs are reproducible across platforms; the
// standard library engines/distributions are deliberately not used.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // uniform on [0, 1), 53-bit resolution
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform on [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // uniform on [-half_width, half_width)
    double uniform_sym(double half_width) { return uniform(-half_width, half_width); }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::array<std::uint64_t, 4> state_{};
};

// Experiment identifiers keyed into per-unit streams. Values are part of the
// reproducibility contract: changing them changes every derived stream.
enum class StreamId : std::uint64_t {
    simulate = 1,
    reservoir = 2,
    training_noise = 3,
    prediction = 4,
    lifetime_ic = 5,
    lifetime_member = 6,
    ensemble_member = 7,
    reference_states = 8,
    plam_member = 9,
    ablation = 10,
    testing = 99,
};

// Derives an independent stream from (master seed, experiment id, unit index).
// Units of work (initial condition, ensemble member, energy level) each own a
// stream, so results do not depend on scheduling or worker count.
inline Rng make_stream(std::uint64_t master_seed, StreamId id, std::uint64_t unit_index) {
    std::uint64_t sm = master_seed;
    splitmix64(sm);
    sm ^= static_cast<std::uint64_t>(id) * 0x9e3779b97f4a7c15ULL;
    splitmix64(sm);
    sm ^= unit_index;
    return Rng(splitmix64(sm));
}

}  // namespace mfesn
