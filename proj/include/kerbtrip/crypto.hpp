// Copyright 2026 The kerbtrip Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <sodium.h>

#include <algorithm>
#include <array>
#include <cstdint>
#include <random>
#include <string_view>

#include "kerbtrip/bytes.hpp"
#include "kerbtrip/types.hpp"

namespace kerbtrip {

class InvalidPassword : public Error {
public:
    using Error::Error;
};

/// Wrong key or tampered box; the two cases are deliberately indistinguishable.
class AuthenticationFailure : public Error {
public:
    AuthenticationFailure() : Error("authentication failure") {}
};

namespace detail {
inline void sodium_ready() {
    static const bool ok = sodium_init() >= 0;
    if (!ok) throw Error("libsodium failed to initialize");
}
}  // namespace detail

enum class KeyOrigin : std::uint8_t { password_derived, session, long_term };

struct SymmetricKey {
    static constexpr std::size_t size = 32;

    std::array<std::uint8_t, size> bytes{};
    KeyOrigin origin = KeyOrigin::session;

    static SymmetricKey from_bytes(ByteView data, KeyOrigin origin) {
        if (data.size() != size) throw std::invalid_argument("symmetric key must be 32 bytes");
        SymmetricKey k;
        std::copy(data.begin(), data.end(), k.bytes.begin());
        k.origin = origin;
        return k;
    }

    std::string hex() const { return to_hex(bytes); }

    // Origin is bookkeeping; identity is the key material.
    bool operator==(const SymmetricKey& o) const noexcept { return bytes == o.bytes; }
    bool operator<(const SymmetricKey& o) const noexcept { return bytes < o.bytes; }
};

/// SHA-256(password || 0x00 || principal || 0x00 || index).
inline SymmetricKey derive_key(std::string_view password, const PrincipalId& principal, int index) {
    if (password.empty()) throw InvalidPassword("password must not be empty");
    if (index < 1 || index > 3) throw std::invalid_argument("password index must be 1, 2 or 3");
    detail::sodium_ready();
    Bytes input;
    input.reserve(password.size() + principal.str().size() + 3);
    input.insert(input.end(), password.begin(), password.end());
    input.push_back(0x00);
    input.insert(input.end(), principal.str().begin(), principal.str().end());
    input.push_back(0x00);
    input.push_back(static_cast<std::uint8_t>(index));
    SymmetricKey k;
    k.origin = KeyOrigin::password_derived;
    crypto_hash_sha256(k.bytes.data(), input.data(), input.size());
    return k;
}

/// Per-component seed from a run seed and a label.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (unsigned char c : label) {
        h ^= c;
        h *= 1099511628211ull;
    }
    std::uint64_t z = seed ^ h;
    z += 0x9E3779B97F4A7C15ull;  // splitmix64 finalizer
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Seeded for simulation, OS entropy for daemons.
class RandomSource {
public:
    static RandomSource seeded(std::uint64_t seed) { return RandomSource(seed); }
    static RandomSource system() {
        detail::sodium_ready();
        std::uint64_t seed;
        randombytes_buf(&seed, sizeof seed);
        RandomSource r(seed);
        r.system_ = true;
        return r;
    }

    std::uint64_t next_u64() {
        if (system_) {
            std::uint64_t v;
            randombytes_buf(&v, sizeof v);
            return v;
        }
        return engine_();
    }

    void fill(std::span<std::uint8_t> out) {
        for (std::size_t i = 0; i < out.size(); i += 8) {
            auto v = next_u64();
            for (std::size_t j = 0; j < 8 && i + j < out.size(); ++j) out[i + j] = static_cast<std::uint8_t>(v >> (8 * j));
        }
    }

private:
    explicit RandomSource(std::uint64_t seed) : engine_(seed) {}

    std::mt19937_64 engine_;
    bool system_ = false;
};

inline SymmetricKey gen_session_key(RandomSource& rng) {
    SymmetricKey k;
    k.origin = KeyOrigin::session;
    rng.fill(k.bytes);
    return k;
}

/// Yields a fresh 24-byte nonce per call. The counter form writes a
/// per-owner domain and a running counter so two owners never collide.
class NonceSource {
public:
    using Value = std::array<std::uint8_t, 24>;

    static NonceSource counter(std::uint64_t domain) { return NonceSource(domain, false); }
    static NonceSource system() { return NonceSource(0, true); }

    Value next() {
        Value n{};
        if (system_) {
            detail::sodium_ready();
            randombytes_buf(n.data(), n.size());
            return n;
        }
        ++count_;
        for (int i = 0; i < 8; ++i) {
            n[i] = static_cast<std::uint8_t>(domain_ >> (56 - 8 * i));
            n[8 + i] = static_cast<std::uint8_t>(count_ >> (56 - 8 * i));
        }
        return n;
    }

private:
    NonceSource(std::uint64_t domain, bool system) : domain_(domain), system_(system) {}

    std::uint64_t domain_;
    std::uint64_t count_ = 0;
    bool system_;
};

struct SealedBox {
    static constexpr std::size_t nonce_size = crypto_aead_xchacha20poly1305_ietf_NPUBBYTES;
    static constexpr std::size_t tag_size = crypto_aead_xchacha20poly1305_ietf_ABYTES;

    std::array<std::uint8_t, nonce_size> nonce{};
    Bytes ciphertext;
    std::array<std::uint8_t, tag_size> tag{};

    /// nonce || ciphertext || tag, the opaque form carried on the wire.
    Bytes serialize() const {
        Bytes out(nonce.begin(), nonce.end());
        out.insert(out.end(), ciphertext.begin(), ciphertext.end());
        out.insert(out.end(), tag.begin(), tag.end());
        return out;
    }

    static SealedBox parse(ByteView data) {
        if (data.size() < nonce_size + tag_size)
            throw CodecError(CodecError::Kind::Malformed, "sealed box shorter than nonce and tag");
        SealedBox box;
        std::copy_n(data.begin(), nonce_size, box.nonce.begin());
        box.ciphertext.assign(data.begin() + nonce_size, data.end() - tag_size);
        std::copy(data.end() - tag_size, data.end(), box.tag.begin());
        return box;
    }

    bool operator==(const SealedBox&) const = default;
};

static_assert(SealedBox::nonce_size == 24);

inline SealedBox seal(const SymmetricKey& key, ByteView plaintext, NonceSource& nonces) {
    detail::sodium_ready();
    SealedBox box;
    box.nonce = nonces.next();
    box.ciphertext.resize(plaintext.size());
    unsigned long long tag_len = 0;
    crypto_aead_xchacha20poly1305_ietf_encrypt_detached(box.ciphertext.data(), box.tag.data(), &tag_len,
                                                        plaintext.data(), plaintext.size(), nullptr, 0, nullptr,
                                                        box.nonce.data(), key.bytes.data());
    return box;
}

/// Throws AuthenticationFailure unless `key` sealed `box` and nothing changed since.
inline Bytes open(const SymmetricKey& key, const SealedBox& box) {
    detail::sodium_ready();
    Bytes plain(box.ciphertext.size());
    if (crypto_aead_xchacha20poly1305_ietf_decrypt_detached(plain.data(), nullptr, box.ciphertext.data(),
                                                            box.ciphertext.size(), box.tag.data(), nullptr, 0,
                                                            box.nonce.data(), key.bytes.data()) != 0)
        throw AuthenticationFailure();
    return plain;
}

}  // namespace kerbtrip
