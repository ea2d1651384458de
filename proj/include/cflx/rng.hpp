#pragma once

#include <cstdint>
#include <string_view>

namespace cflx {

// Deterministic splitmix64 stream. All randomness in the pipeline flows from
// one master seed via named substreams so runs are byte-reproducible.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    // Named substream: independent stream derived from (master, name).
    static Rng stream(std::uint64_t master, std::string_view name);

    std::uint64_t next_u64();
    // Uniform in [0,1).
    double uniform();
    // Uniform in [lo,hi].
    double uniform(double lo, double hi);
    // Uniform integer in [0, n).
    std::uint64_t next_below(std::uint64_t n);
    // Standard normal (Box-Muller, no cached spare).
    double normal();

private:
    std::uint64_t state_;
};

}  // namespace cflx
