#pragma once

#include <cstdint>
#include <string_view>

namespace sdelab {

// 64-bit FNV-1a; used for deriving stream keys from experiment ids and for
// config fingerprints in run manifests.
std::uint64_t fnv1a64(std::string_view bytes);

// xoshiro256** seeded through splitmix64. Self-contained so that sampled
// values are identical across standard libraries and compilers.
class Rng {
  public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();
    double uniform();                    // [0, 1)
    double normal();                     // standard normal, polar method
    std::uint64_t uniform_index(std::uint64_t n);  // {0, .., n-1}, unbiased
    std::uint64_t poisson(double rate);

  private:
    std::uint64_t s_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Deterministic stream derivation: one independent stream per
// (master seed, experiment id, stream index). Parallel replicas each own a
// derived stream, so results do not depend on thread scheduling.
Rng derive_stream(std::uint64_t master_seed, std::string_view experiment_id, std::uint64_t index);

}  // namespace sdelab
