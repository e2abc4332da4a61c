#ifndef FEDMETER_COMPRESSION_HPP
#define FEDMETER_COMPRESSION_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "fedmeter/numerics.hpp"
#include "fedmeter/rng.hpp"

namespace fedmeter {

// --- structured update: random mask -------------------------------------

// Keeps round(keep_fraction * len) entries chosen uniformly at random;
// everything else is zeroed before upload.
struct MaskResult {
    Vector masked;                    // full length, dropped entries == 0
    std::vector<std::uint32_t> kept;  // kept indices, ascending
};

MaskResult apply_mask(std::span<const double> delta, double keep_fraction,
                      RngStream& rng);

// --- sketched update: stochastic uniform quantization --------------------

// 2^bits evenly spaced levels spanning [s_min, s_max]; each value is
// rounded stochastically to one of its two bracketing levels so the
// expected decode equals the input.
struct QuantizedTensor {
    std::uint8_t bits = 1;  // 1, 2, 4 or 8
    float s_min = 0.0f;
    float s_max = 0.0f;
    std::size_t numel = 0;
    std::vector<std::uint8_t> packed;  // bits*numel bits, LSB-first
};

QuantizedTensor quantize(std::span<const double> delta, int bits,
                         RngStream& rng);
Vector dequantize(const QuantizedTensor& q);

// --- wire payloads --------------------------------------------------------

enum class PayloadMode : std::uint8_t { Dense = 0, Masked = 1, Quantized = 2 };

struct UpdatePayload {
    PayloadMode mode = PayloadMode::Dense;
    std::size_t numel = 0;
    std::vector<std::uint8_t> body;

    std::size_t byte_size() const { return body.size(); }
};

// Dense: numel float32 values.
UpdatePayload encode_dense(std::span<const double> delta);

// Masked: ceil(numel/8)-byte keep bitmap, then one float32 per kept index.
UpdatePayload encode_masked(std::span<const double> masked,
                            std::span<const std::uint32_t> kept);

// Quantized: [bits:1][mode-tag:1][s_min:f32][s_max:f32][packed codes].
UpdatePayload encode_quantized(const QuantizedTensor& q);

Vector decode(const UpdatePayload& payload);

std::size_t dense_payload_bytes(std::size_t numel);
std::size_t masked_payload_bytes(std::size_t numel, std::size_t kept);
std::size_t quantized_payload_bytes(std::size_t numel, int bits);

// --- configured round-trip used by the federation loop -------------------

struct CompressionConfig {
    enum class Mode { None, Dense, Mask, Quantize };
    Mode mode = Mode::None;
    double keep_fraction = 0.10;  // Mode::Mask
    int bits = 4;                 // Mode::Quantize

    void validate() const;
};

struct CompressedDelta {
    Vector delta;               // what the server receives after decode
    std::size_t payload_bytes;  // upload size on the wire
};

// Pushes a client delta through the configured encoding and back.
// Mode::None forwards the delta untouched at full float32 accounting.
// Mask and quantization streams are derived from (seed, client, round)
// so every client draws independently in every round.
CompressedDelta compress_roundtrip(std::span<const double> delta,
                                   const CompressionConfig& config,
                                   std::uint64_t master_seed,
                                   std::uint32_t client_id,
                                   std::uint64_t round);

}  // namespace fedmeter

#endif
