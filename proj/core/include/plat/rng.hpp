#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace plat {

// Deterministic, compiler-independent RNG. std::mt19937 distributions are
// implementation-defined, so all sampling goes through this class to keep
// runs byte-reproducible across toolchains.
//
// Core generator: xoshiro256++ seeded through splitmix64. Gaussian draws use
// Box-Muller with a cached spare.
class Rng {
public:
    Rng() : Rng(0) {}
    explicit Rng(uint64_t seed);

    uint64_t next_u64();

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform();

    // Uniform integer in [0, n), rejection-sampled (n > 0).
    uint64_t below(uint64_t n);

    double gaussian(double mean, double stddev);

    // Fisher-Yates.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Serialization for checkpoint round-trips.
    std::vector<uint64_t> state_words() const;
    void restore(const std::vector<uint64_t>& words);

private:
    uint64_t s_[4];
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// splitmix64 step; exposed for seed derivation.
uint64_t splitmix64(uint64_t& state);

// Derives an independent stream seed from a global seed and a purpose label
// (plus an optional index), so e.g. eval sampling cannot perturb training.
uint64_t derive_seed(uint64_t global_seed, std::string_view purpose, uint64_t index = 0);

}  // namespace plat
