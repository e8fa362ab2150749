#include "autobahn/core.hpp"

#include <openssl/sha.h>

#include <stdexcept>

namespace autobahn {

QuorumConfig quorum_sizes(uint32_t n) {
    if (n < 4 || n % 3 != 1)
        throw std::invalid_argument("replica count must be 3f+1 with f >= 1, got " + std::to_string(n));
    QuorumConfig q;
    q.n = n;
    q.f = (n - 1) / 3;
    q.poa = q.f + 1;
    q.consensus = 2 * q.f + 1;
    q.fast = n;
    return q;
}

std::string Digest::hex() const {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(64);
    for (uint8_t b : bytes) {
        out.push_back(kHex[b >> 4]);
        out.push_back(kHex[b & 0xf]);
    }
    return out;
}

Digest digest(std::span<const uint8_t> bytes) {
    Digest d;
    SHA256(bytes.data(), bytes.size(), d.bytes.data());
    return d;
}

Digest digest(std::string_view bytes) {
    return digest(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(bytes.data()), bytes.size()));
}

KeyRing::KeyRing(uint32_t n, uint64_t seed) {
    keys_.reserve(n);
    for (uint32_t r = 0; r < n; ++r) keys_.push_back(Encoder().str("key").u64(seed).u32(r).finish());
}

Authenticator KeyRing::sign(ReplicaId signer, const Digest& msg) const {
    if (signer >= keys_.size()) throw std::out_of_range("no key for signer");
    return {signer, Encoder().dig(keys_[signer]).u32(signer).dig(msg).finish()};
}

bool KeyRing::verify(const Authenticator& auth, const Digest& msg) const {
    if (auth.signer >= keys_.size()) return false;
    return Encoder().dig(keys_[auth.signer]).u32(auth.signer).dig(msg).finish() == auth.tag;
}

Encoder& Encoder::u8(uint8_t v) {
    buf_.push_back(v);
    return *this;
}

Encoder& Encoder::u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
    return *this;
}

Encoder& Encoder::u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
    return *this;
}

Encoder& Encoder::dig(const Digest& d) {
    buf_.insert(buf_.end(), d.bytes.begin(), d.bytes.end());
    return *this;
}

Encoder& Encoder::bytes(std::span<const uint8_t> b) {
    u32(static_cast<uint32_t>(b.size()));
    buf_.insert(buf_.end(), b.begin(), b.end());
    return *this;
}

Encoder& Encoder::str(std::string_view s) {
    return bytes(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(s.data()), s.size()));
}

Encoder& Encoder::auth(const Authenticator& a) {
    return u32(a.signer).dig(a.tag);
}

}  // namespace autobahn
