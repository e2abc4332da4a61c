#ifndef FEDMETER_RNG_HPP
#define FEDMETER_RNG_HPP

#include <cstddef>
#include <cstdint>
#include <vector>

namespace fedmeter {

// Stream purposes. Each (purpose, id_a, id_b) triple keys an independent
// stream; the same triple always replays the same sequence.
enum class RngPurpose : std::uint64_t {
    ParamInit = 1,
    SyntheticProfile = 2,
    SyntheticNoise = 3,
    ClusterShape = 4,
    Mask = 5,
    Quantize = 6,
    Test = 7,
};

// Counter-based splittable RNG. A draw is a pure function of
// (key, counter), so streams can be handed to parallel tasks and still
// reproduce bit-identically regardless of scheduling.
class RngStream {
public:
    RngStream() : key_(0), counter_(0) {}
    RngStream(std::uint64_t seed, std::uint64_t stream_id);

    static RngStream derive(std::uint64_t seed, RngPurpose purpose,
                            std::uint64_t id_a = 0, std::uint64_t id_b = 0);

    std::uint64_t next_u64();

    // Uniform in [0, 1) with 53 random bits.
    double uniform();

    // Uniform integer in [0, n); n must be > 0.
    std::uint64_t below(std::uint64_t n);

    // Standard normal via Box-Muller.
    double normal();

    // Uniform permutation of 0..n-1 (Fisher-Yates).
    std::vector<std::size_t> shuffle(std::size_t n);

    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_;
};

}  // namespace fedmeter

#endif
