#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace autobahn {

using ReplicaId = uint32_t;
using SlotNum = uint64_t;
using ViewNum = uint64_t;
using LanePos = uint64_t;

// Simulated time in micro-units; one unit (one uniform message delay) is kUnit.
using Time = int64_t;
constexpr Time kUnit = 1'000'000;

inline Time units(double u) { return static_cast<Time>(u * kUnit + (u >= 0 ? 0.5 : -0.5)); }
inline double to_units(Time t) { return static_cast<double>(t) / kUnit; }

struct QuorumConfig {
    uint32_t n = 0;
    uint32_t f = 0;
    uint32_t poa = 0;        // f+1
    uint32_t consensus = 0;  // 2f+1
    uint32_t fast = 0;       // n

    bool operator==(const QuorumConfig&) const = default;
};

// Throws std::invalid_argument unless n = 3f+1 with f >= 1.
QuorumConfig quorum_sizes(uint32_t n);

struct Digest {
    std::array<uint8_t, 32> bytes{};

    auto operator<=>(const Digest&) const = default;
    std::string hex() const;
    std::string short_hex() const { return hex().substr(0, 12); }
};

struct DigestHash {
    size_t operator()(const Digest& d) const noexcept {
        size_t h;
        static_assert(sizeof(h) <= sizeof(d.bytes));
        __builtin_memcpy(&h, d.bytes.data(), sizeof(h));
        return h;
    }
};

// SHA-256.
Digest digest(std::span<const uint8_t> bytes);
Digest digest(std::string_view bytes);

struct Authenticator {
    ReplicaId signer = 0;
    Digest tag;

    bool operator==(const Authenticator&) const = default;
};

// Keyed-hash signing: tag = H(key[signer] || signer || msg). Every replica's key is
// known to the harness; honest code paths only ever sign with their own id.
class KeyRing {
public:
    KeyRing() = default;
    KeyRing(uint32_t n, uint64_t seed);

    Authenticator sign(ReplicaId signer, const Digest& msg) const;
    bool verify(const Authenticator& auth, const Digest& msg) const;
    uint32_t size() const { return static_cast<uint32_t>(keys_.size()); }

private:
    std::vector<Digest> keys_;
};

// Canonical byte layout: little-endian fixed-width integers, u32 length prefix
// for variable-size fields, 32 raw bytes per digest.
class Encoder {
public:
    Encoder& u8(uint8_t v);
    Encoder& u32(uint32_t v);
    Encoder& u64(uint64_t v);
    Encoder& boolean(bool v) { return u8(v ? 1 : 0); }
    Encoder& dig(const Digest& d);
    Encoder& bytes(std::span<const uint8_t> b);
    Encoder& str(std::string_view s);
    Encoder& auth(const Authenticator& a);

    const std::vector<uint8_t>& data() const { return buf_; }
    Digest finish() const { return digest(buf_); }

private:
    std::vector<uint8_t> buf_;
};

}  // namespace autobahn
