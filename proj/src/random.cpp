#include "semilab/random.hpp"

#include <cmath>
#include <numbers>

namespace semilab {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kMul0, ctr[0], hi0, lo0);
        mulhilo(kMul1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

void RandomStream::seek(std::uint64_t word_index) noexcept {
    counter_ = word_index;
    has_cached_normal_ = false;
}

void RandomStream::refill() noexcept {
    const std::uint64_t block = counter_ >> 1;
    const std::array<std::uint32_t, 4> ctr = {
        static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32),
        static_cast<std::uint32_t>(stream_id_), static_cast<std::uint32_t>(stream_id_ >> 32)};
    const std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed_),
                                              static_cast<std::uint32_t>(seed_ >> 32)};
    const auto out = philox4x32_10(ctr, key);
    block_[0] = (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
    block_[1] = (static_cast<std::uint64_t>(out[3]) << 32) | out[2];
    block_index_ = block;
}

std::uint64_t RandomStream::next_u64() noexcept {
    if ((counter_ >> 1) != block_index_) refill();
    const std::uint64_t v = block_[counter_ & 1u];
    ++counter_;
    return v;
}

double RandomStream::uniform() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RandomStream::normal() noexcept {
    if (has_cached_normal_) {
        has_cached_normal_ = false;
        return cached_normal_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double phase = 2.0 * std::numbers::pi * u2;
    cached_normal_ = r * std::sin(phase);
    has_cached_normal_ = true;
    return r * std::cos(phase);
}

RandomStream RandomStream::child(std::uint64_t index) const noexcept {
    return RandomStream(seed_, splitmix64(stream_id_ ^ splitmix64(index + 0x632BE59BD9B4E019ULL)));
}

}  // namespace semilab
