#include "fedmeter/compression.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "fedmeter/errors.hpp"

namespace fedmeter {

namespace {

void append_f32(std::vector<std::uint8_t>& body, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    body.push_back(std::uint8_t(bits & 0xFF));
    body.push_back(std::uint8_t((bits >> 8) & 0xFF));
    body.push_back(std::uint8_t((bits >> 16) & 0xFF));
    body.push_back(std::uint8_t((bits >> 24) & 0xFF));
}

float read_f32(const std::vector<std::uint8_t>& body, std::size_t at) {
    std::uint32_t bits = std::uint32_t(body[at]) |
                         (std::uint32_t(body[at + 1]) << 8) |
                         (std::uint32_t(body[at + 2]) << 16) |
                         (std::uint32_t(body[at + 3]) << 24);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

void require_finite(std::span<const double> delta, const char* where) {
    if (!all_finite(delta)) {
        throw NumericError(std::string(where) + ": non-finite value in delta");
    }
}

constexpr std::uint8_t kQuantizedTag = 2;

bool valid_bits(int bits) {
    return bits == 1 || bits == 2 || bits == 4 || bits == 8;
}

}  // namespace

MaskResult apply_mask(std::span<const double> delta, double keep_fraction,
                      RngStream& rng) {
    if (!(keep_fraction >= 0.0 && keep_fraction <= 1.0)) {
        throw ConfigError("keep fraction must lie in [0, 1], got " +
                          std::to_string(keep_fraction));
    }
    const std::size_t n = delta.size();
    const std::size_t n_keep =
        std::size_t(std::llround(keep_fraction * double(n)));

    const std::vector<std::size_t> order = rng.shuffle(n);
    MaskResult out;
    out.kept.reserve(n_keep);
    for (std::size_t i = 0; i < n_keep; ++i) {
        out.kept.push_back(std::uint32_t(order[i]));
    }
    std::sort(out.kept.begin(), out.kept.end());
    out.masked.assign(n, 0.0);
    for (std::uint32_t i : out.kept) out.masked[i] = delta[i];
    return out;
}

QuantizedTensor quantize(std::span<const double> delta, int bits,
                         RngStream& rng) {
    if (!valid_bits(bits)) {
        throw ConfigError("quantizer width must be 1, 2, 4 or 8 bits, got " +
                          std::to_string(bits));
    }
    require_finite(delta, "quantize");

    QuantizedTensor q;
    q.bits = std::uint8_t(bits);
    q.numel = delta.size();
    q.packed.assign((delta.size() * std::size_t(bits) + 7) / 8, 0);
    if (delta.empty()) return q;

    const auto [lo_it, hi_it] = std::minmax_element(delta.begin(), delta.end());
    q.s_min = float(*lo_it);
    q.s_max = float(*hi_it);

    const double smin = double(q.s_min);
    const double smax = double(q.s_max);
    const std::uint32_t levels = std::uint32_t(1) << bits;
    const double step = (smax - smin) / double(levels - 1);

    for (std::size_t k = 0; k < delta.size(); ++k) {
        std::uint32_t code = 0;
        if (step > 0.0) {
            const double x = std::clamp(delta[k], smin, smax);
            double t = (x - smin) / step;
            std::uint32_t cell = t <= 0.0 ? 0
                                          : std::min(std::uint32_t(t),
                                                     levels - 2);
            const double lo = smin + double(cell) * step;
            const double hi = smin + double(cell + 1) * step;
            double frac;
            if (x <= lo) {
                frac = 0.0;
            } else if (x >= hi) {
                frac = 1.0;
            } else {
                frac = (x - lo) / (hi - lo);
            }
            // rng.uniform() < frac has probability frac; frac == 1 always
            // fires, so grid points stay deterministic.
            code = cell + (rng.uniform() < frac ? 1 : 0);
        }
        const std::size_t bit = k * std::size_t(bits);
        q.packed[bit / 8] |= std::uint8_t(code << (bit % 8));
    }
    return q;
}

Vector dequantize(const QuantizedTensor& q) {
    if (!valid_bits(q.bits)) {
        throw PayloadError("quantized tensor has invalid bit width " +
                           std::to_string(int(q.bits)));
    }
    const std::size_t want = (q.numel * std::size_t(q.bits) + 7) / 8;
    if (q.packed.size() != want) {
        throw PayloadError("quantized tensor holds " +
                           std::to_string(q.packed.size()) +
                           " code bytes, expected " + std::to_string(want));
    }

    const double smin = double(q.s_min);
    const double smax = double(q.s_max);
    const std::uint32_t levels = std::uint32_t(1) << q.bits;
    const double step =
        smax > smin ? (smax - smin) / double(levels - 1) : 0.0;
    const std::uint32_t mask = std::uint8_t((levels - 1) & 0xFF);

    Vector out(q.numel);
    for (std::size_t k = 0; k < q.numel; ++k) {
        const std::size_t bit = k * std::size_t(q.bits);
        const std::uint32_t code = (q.packed[bit / 8] >> (bit % 8)) & mask;
        if (code == 0) {
            out[k] = smin;
        } else if (code == levels - 1) {
            out[k] = smax;
        } else {
            out[k] = smin + double(code) * step;
        }
    }
    return out;
}

UpdatePayload encode_dense(std::span<const double> delta) {
    require_finite(delta, "encode_dense");
    UpdatePayload p;
    p.mode = PayloadMode::Dense;
    p.numel = delta.size();
    p.body.reserve(4 * delta.size());
    for (double v : delta) append_f32(p.body, float(v));
    return p;
}

UpdatePayload encode_masked(std::span<const double> masked,
                            std::span<const std::uint32_t> kept) {
    require_finite(masked, "encode_masked");
    UpdatePayload p;
    p.mode = PayloadMode::Masked;
    p.numel = masked.size();
    const std::size_t bitmap_bytes = (masked.size() + 7) / 8;
    p.body.assign(bitmap_bytes, 0);
    p.body.reserve(bitmap_bytes + 4 * kept.size());
    std::uint32_t prev = 0;
    bool first = true;
    for (std::uint32_t i : kept) {
        if (i >= masked.size()) {
            throw PayloadError("kept index " + std::to_string(i) +
                               " out of range for length " +
                               std::to_string(masked.size()));
        }
        if (!first && i <= prev) {
            throw PayloadError("kept indices must be strictly ascending");
        }
        first = false;
        prev = i;
        p.body[i / 8] |= std::uint8_t(1u << (i % 8));
        append_f32(p.body, float(masked[i]));
    }
    return p;
}

UpdatePayload encode_quantized(const QuantizedTensor& q) {
    const std::size_t want = (q.numel * std::size_t(q.bits) + 7) / 8;
    if (!valid_bits(q.bits) || q.packed.size() != want) {
        throw PayloadError("cannot encode malformed quantized tensor");
    }
    UpdatePayload p;
    p.mode = PayloadMode::Quantized;
    p.numel = q.numel;
    p.body.reserve(2 + 8 + q.packed.size());
    p.body.push_back(q.bits);
    p.body.push_back(kQuantizedTag);
    append_f32(p.body, q.s_min);
    append_f32(p.body, q.s_max);
    p.body.insert(p.body.end(), q.packed.begin(), q.packed.end());
    return p;
}

Vector decode(const UpdatePayload& payload) {
    switch (payload.mode) {
        case PayloadMode::Dense: {
            if (payload.body.size() != 4 * payload.numel) {
                throw PayloadError("dense payload holds " +
                                   std::to_string(payload.body.size()) +
                                   " bytes, expected " +
                                   std::to_string(4 * payload.numel));
            }
            Vector out(payload.numel);
            for (std::size_t k = 0; k < payload.numel; ++k) {
                out[k] = double(read_f32(payload.body, 4 * k));
            }
            return out;
        }
        case PayloadMode::Masked: {
            const std::size_t bitmap_bytes = (payload.numel + 7) / 8;
            if (payload.body.size() < bitmap_bytes) {
                throw PayloadError("masked payload shorter than its bitmap");
            }
            std::size_t kept = 0;
            for (std::size_t i = 0; i < payload.numel; ++i) {
                if (payload.body[i / 8] & (1u << (i % 8))) ++kept;
            }
            for (std::size_t b = payload.numel; b < bitmap_bytes * 8; ++b) {
                if (payload.body[b / 8] & (1u << (b % 8))) {
                    throw PayloadError(
                        "masked payload sets bits past the update length");
                }
            }
            if (payload.body.size() != bitmap_bytes + 4 * kept) {
                throw PayloadError("masked payload holds " +
                                   std::to_string(payload.body.size()) +
                                   " bytes, expected " +
                                   std::to_string(bitmap_bytes + 4 * kept));
            }
            Vector out(payload.numel, 0.0);
            std::size_t at = bitmap_bytes;
            for (std::size_t i = 0; i < payload.numel; ++i) {
                if (payload.body[i / 8] & (1u << (i % 8))) {
                    out[i] = double(read_f32(payload.body, at));
                    at += 4;
                }
            }
            return out;
        }
        case PayloadMode::Quantized: {
            if (payload.body.size() < 10) {
                throw PayloadError("quantized payload shorter than its header");
            }
            if (payload.body[1] != kQuantizedTag) {
                throw PayloadError("unknown quantized payload tag " +
                                   std::to_string(int(payload.body[1])));
            }
            QuantizedTensor q;
            q.bits = payload.body[0];
            if (!valid_bits(q.bits)) {
                throw PayloadError("quantized payload has invalid bit width " +
                                   std::to_string(int(q.bits)));
            }
            q.s_min = read_f32(payload.body, 2);
            q.s_max = read_f32(payload.body, 6);
            q.numel = payload.numel;
            const std::size_t want =
                (payload.numel * std::size_t(q.bits) + 7) / 8;
            if (payload.body.size() != 10 + want) {
                throw PayloadError("quantized payload holds " +
                                   std::to_string(payload.body.size()) +
                                   " bytes, expected " +
                                   std::to_string(10 + want));
            }
            q.packed.assign(payload.body.begin() + 10, payload.body.end());
            const std::size_t tail = q.numel * std::size_t(q.bits);
            for (std::size_t b = tail; b < q.packed.size() * 8; ++b) {
                if (q.packed[b / 8] & (1u << (b % 8))) {
                    throw PayloadError(
                        "quantized payload sets padding bits past the codes");
                }
            }
            return dequantize(q);
        }
    }
    throw PayloadError("unknown payload mode " +
                       std::to_string(int(payload.mode)));
}

std::size_t dense_payload_bytes(std::size_t numel) { return 4 * numel; }

std::size_t masked_payload_bytes(std::size_t numel, std::size_t kept) {
    return (numel + 7) / 8 + 4 * kept;
}

std::size_t quantized_payload_bytes(std::size_t numel, int bits) {
    if (!valid_bits(bits)) {
        throw ConfigError("quantizer width must be 1, 2, 4 or 8 bits, got " +
                          std::to_string(bits));
    }
    return 2 + 8 + (numel * std::size_t(bits) + 7) / 8;
}

void CompressionConfig::validate() const {
    switch (mode) {
        case Mode::None:
        case Mode::Dense:
            return;
        case Mode::Mask:
            if (!(keep_fraction >= 0.0 && keep_fraction <= 1.0)) {
                throw ConfigError("keep fraction must lie in [0, 1], got " +
                                  std::to_string(keep_fraction));
            }
            return;
        case Mode::Quantize:
            if (!valid_bits(bits)) {
                throw ConfigError(
                    "quantizer width must be 1, 2, 4 or 8 bits, got " +
                    std::to_string(bits));
            }
            return;
    }
    throw ConfigError("unknown compression mode");
}

CompressedDelta compress_roundtrip(std::span<const double> delta,
                                   const CompressionConfig& config,
                                   std::uint64_t master_seed,
                                   std::uint32_t client_id,
                                   std::uint64_t round) {
    config.validate();
    switch (config.mode) {
        case CompressionConfig::Mode::None:
            // Stays in double precision in-process; accounted as the
            // float32 wire size a dense upload would cost.
            return CompressedDelta{Vector(delta.begin(), delta.end()),
                                   dense_payload_bytes(delta.size())};
        case CompressionConfig::Mode::Dense: {
            const UpdatePayload p = encode_dense(delta);
            return CompressedDelta{decode(p), p.byte_size()};
        }
        case CompressionConfig::Mode::Mask: {
            RngStream rng = RngStream::derive(master_seed, RngPurpose::Mask,
                                              client_id, round);
            const MaskResult mask =
                apply_mask(delta, config.keep_fraction, rng);
            const UpdatePayload p = encode_masked(mask.masked, mask.kept);
            return CompressedDelta{decode(p), p.byte_size()};
        }
        case CompressionConfig::Mode::Quantize: {
            RngStream rng = RngStream::derive(
                master_seed, RngPurpose::Quantize, client_id, round);
            const QuantizedTensor q = quantize(delta, config.bits, rng);
            const UpdatePayload p = encode_quantized(q);
            return CompressedDelta{decode(p), p.byte_size()};
        }
    }
    throw ConfigError("unknown compression mode");
}

}  // namespace fedmeter
