#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace skrl {

// Deterministic RNG with explicit splitting so independent streams
// (per prompt, per rollout) never depend on call order or thread count.
class Rng {
  public:
    explicit Rng(uint64_t seed) : engine_(mix(seed)), state_seed_(mix(seed)) {}

    // derive an unrelated child stream
    Rng split(uint64_t salt) const {
        return Rng(mix(state_seed_ ^ (0x9e3779b97f4a7c15ull * (salt + 1))), true);
    }

    uint64_t next_u64() { return engine_(); }

    // uniform in [0,1)
    double next_double() { return (double) (engine_() >> 11) * 0x1.0p-53; }

    // uniform in [lo,hi)
    float next_float(float lo, float hi) { return lo + (float) next_double() * (hi - lo); }

    // uniform integer in [0, n)
    int next_int(int n) { return (int) (next_double() * n); }

    // index sampled from normalized probabilities
    int sample_categorical(const std::vector<float> & probs) {
        const double u = next_double();
        double acc = 0.0;
        for (size_t i = 0; i < probs.size(); ++i) {
            acc += probs[i];
            if (u < acc) {
                return (int) i;
            }
        }
        return (int) probs.size() - 1; // rounding tail
    }

  private:
    explicit Rng(uint64_t mixed, bool) : engine_(mixed), state_seed_(mixed) {}

    static uint64_t mix(uint64_t x) {
        // splitmix64 finalizer
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    std::mt19937_64 engine_;
    uint64_t state_seed_ = 0;
};

} // namespace skrl
