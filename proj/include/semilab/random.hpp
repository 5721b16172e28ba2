#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace semilab {

// Philox4x32-10 block cipher in counter mode. Output is a pure function of
// (seed, stream_id, counter), so any number of workers can draw from
// disjoint streams and reproduce the same numbers regardless of scheduling.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);

class RandomStream {
public:
    using result_type = std::uint64_t;

    RandomStream(std::uint64_t seed, std::uint64_t stream_id) noexcept
        : seed_(seed), stream_id_(stream_id) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_id_; }
    // Number of 64-bit words consumed so far.
    std::uint64_t counter() const noexcept { return counter_; }

    // Jump to an absolute position in the stream.
    void seek(std::uint64_t word_index) noexcept;

    std::uint64_t next_u64() noexcept;

    // Uniform on the open interval (0, 1); never returns 0 or 1.
    double uniform() noexcept;

    // Standard normal via Box-Muller; the second variate is cached.
    double normal() noexcept;

    // Independent child stream; children of the same parent with different
    // indices never share a stream id in practice (64-bit mixing).
    RandomStream child(std::uint64_t index) const noexcept;

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }
    result_type operator()() noexcept { return next_u64(); }

private:
    void refill() noexcept;

    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::uint64_t counter_ = 0;
    std::array<std::uint64_t, 2> block_{};
    std::uint64_t block_index_ = std::numeric_limits<std::uint64_t>::max();
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace semilab
