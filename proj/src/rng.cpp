#include "fedmeter/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace fedmeter {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// splitmix64 output function.
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : counter_(0) {
    // Chain-hash seed and stream id so distinct ids give unrelated keys.
    key_ = mix64(mix64(seed + kGolden) ^ (stream_id + kGolden));
}

RngStream RngStream::derive(std::uint64_t seed, RngPurpose purpose,
                            std::uint64_t id_a, std::uint64_t id_b) {
    std::uint64_t sid = mix64(static_cast<std::uint64_t>(purpose) + kGolden);
    sid = mix64(sid ^ (id_a + kGolden));
    sid = mix64(sid ^ (id_b + kGolden));
    return RngStream(seed, sid);
}

std::uint64_t RngStream::next_u64() {
    ++counter_;
    return mix64(key_ + kGolden * counter_);
}

double RngStream::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("RngStream::below: n must be > 0");
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
}

double RngStream::normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<std::size_t> RngStream::shuffle(std::size_t n) {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(below(i));
        std::swap(perm[i - 1], perm[j]);
    }
    return perm;
}

}  // namespace fedmeter
