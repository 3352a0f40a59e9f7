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

#include <array>
#include <optional>
#include <utility>

#include "kerbtrip/messages.hpp"

namespace kerbtrip {

// Frame: "KTP1" | type byte | u32 payload length | payload, all big-endian.
// Strings carry a u16 length, sealed boxes a u32 length.

inline constexpr std::array<std::uint8_t, 4> frame_magic{'K', 'T', 'P', '1'};
inline constexpr std::size_t frame_header_size = 9;

namespace wire {

inline void put(ByteWriter& w, const PrincipalId& p) { w.str(p.str()); }
inline void put(ByteWriter& w, const NetworkAddress& a) { w.str(a.str()); }
inline void put(ByteWriter& w, const Lifetime& l) {
    w.i64(l.start);
    w.i64(l.expiry);
}
inline void put(ByteWriter& w, const SealedBox& b) { w.blob(b.serialize()); }
inline void put(ByteWriter& w, const SymmetricKey& k) { w.raw(k.bytes); }

template <typename T>
T get(ByteReader& r);

// Invariant violations inside a payload surface as Malformed, not as
// std::invalid_argument.
template <typename F>
auto checked(F&& f) {
    try {
        return f();
    } catch (const std::invalid_argument& e) {
        throw CodecError(CodecError::Kind::Malformed, e.what());
    }
}

template <>
inline PrincipalId get<PrincipalId>(ByteReader& r) {
    auto s = r.str();
    return checked([&] { return PrincipalId(std::move(s)); });
}
template <>
inline NetworkAddress get<NetworkAddress>(ByteReader& r) {
    auto s = r.str();
    return checked([&] { return NetworkAddress(std::move(s)); });
}
template <>
inline Lifetime get<Lifetime>(ByteReader& r) {
    auto start = r.i64();
    auto expiry = r.i64();
    return checked([&] { return Lifetime(start, expiry); });
}
template <>
inline SealedBox get<SealedBox>(ByteReader& r) {
    auto raw = r.blob();
    return SealedBox::parse(raw);
}
template <>
inline SymmetricKey get<SymmetricKey>(ByteReader& r) {
    return SymmetricKey::from_bytes(r.raw(SymmetricKey::size), KeyOrigin::session);
}
template <>
inline Incident get<Incident>(ByteReader& r) {
    auto v = r.u8();
    if (v != 1 && v != 2) throw CodecError(CodecError::Kind::Malformed, "unknown incident kind");
    return static_cast<Incident>(v);
}

inline void put_fields(ByteWriter& w, const AlertPayload& a) {
    put(w, a.reporter);
    put(w, a.suspect_addr);
    put(w, a.client);
    w.u8(static_cast<std::uint8_t>(a.incident));
}

inline AlertPayload get_alert(ByteReader& r) {
    auto reporter = get<PrincipalId>(r);
    auto suspect = get<NetworkAddress>(r);
    auto client = get<PrincipalId>(r);
    auto incident = get<Incident>(r);
    return {std::move(reporter), std::move(suspect), std::move(client), incident};
}

template <typename T>
void put_payload(ByteWriter& w, const T& m) {
    if constexpr (requires { m.requested; }) {  // AsRequest
        put(w, m.client);
        put(w, m.target_tgs);
        w.u64(m.n1);
        put(w, m.requested);
    } else if constexpr (requires { m.ticket; m.client; }) {  // AsReply, TgsReply
        put(w, m.client);
        put(w, m.ticket.sealed);
        put(w, m.enc);
    } else if constexpr (requires { m.target_v; }) {  // TgsRequest
        put(w, m.ticket.sealed);
        put(w, m.target_v);
        w.u64(m.n2);
        put(w, m.authenticator.sealed);
    } else if constexpr (requires { m.authenticator; }) {  // ApRequest
        put(w, m.ticket.sealed);
        put(w, m.authenticator.sealed);
    } else if constexpr (requires { m.client; m.enc; }) {  // ChallengeReply
        put(w, m.client);
        put(w, m.enc);
    } else if constexpr (requires { m.alert; }) {
        put_fields(w, m.alert);
    } else {
        put(w, m.enc);
    }
}

template <typename T>
T get_payload(ByteReader& r) {
    if constexpr (requires(T m) { m.requested; }) {
        auto client = get<PrincipalId>(r);
        auto tgs = get<PrincipalId>(r);
        auto n1 = r.u64();
        auto life = get<Lifetime>(r);
        return T{std::move(client), std::move(tgs), n1, life};
    } else if constexpr (requires(T m) { m.ticket; m.client; }) {
        auto client = get<PrincipalId>(r);
        auto ticket = get<SealedBox>(r);
        auto enc = get<SealedBox>(r);
        return T{std::move(client), {std::move(ticket)}, std::move(enc)};
    } else if constexpr (requires(T m) { m.target_v; }) {
        auto ticket = get<SealedBox>(r);
        auto target = get<PrincipalId>(r);
        auto n2 = r.u64();
        auto auth = get<SealedBox>(r);
        return T{{std::move(ticket)}, std::move(target), n2, {std::move(auth)}};
    } else if constexpr (requires(T m) { m.authenticator; }) {
        auto ticket = get<SealedBox>(r);
        auto auth = get<SealedBox>(r);
        return T{{std::move(ticket)}, {std::move(auth)}};
    } else if constexpr (requires(T m) { m.client; m.enc; }) {
        auto client = get<PrincipalId>(r);
        auto enc = get<SealedBox>(r);
        return T{std::move(client), std::move(enc)};
    } else if constexpr (requires(T m) { m.alert; }) {
        return T{get_alert(r)};
    } else {
        return T{get<SealedBox>(r)};
    }
}

template <std::size_t I = 0>
Message decode_payload(std::uint8_t type, ByteReader& r) {
    if constexpr (I == std::variant_size_v<Message>) {
        throw CodecError(CodecError::Kind::UnknownType, "unknown message type byte " + std::to_string(type));
    } else {
        using T = std::variant_alternative_t<I, Message>;
        if (T::type_byte == type) return Message(std::in_place_index<I>, get_payload<T>(r));
        return decode_payload<I + 1>(type, r);
    }
}

}  // namespace wire

inline Bytes encode(const Message& msg) {
    ByteWriter payload;
    std::visit([&](const auto& m) { wire::put_payload(payload, m); }, msg);
    const auto& body = payload.bytes();
    ByteWriter frame;
    frame.raw(frame_magic);
    frame.u8(type_byte(msg));
    frame.blob(body);
    return std::move(frame).take();
}

namespace detail {

inline void check_magic(ByteView data) {
    auto n = std::min<std::size_t>(data.size(), frame_magic.size());
    if (!std::equal(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(n), frame_magic.begin()))
        throw CodecError(CodecError::Kind::BadMagic, "frame does not start with KTP1");
}

inline std::uint32_t declared_length(ByteView data) {
    return (std::uint32_t{data[5]} << 24) | (std::uint32_t{data[6]} << 16) | (std::uint32_t{data[7]} << 8) |
           std::uint32_t{data[8]};
}

inline Message decode_frame_body(std::uint8_t type, ByteView payload) {
    ByteReader r(payload);
    auto msg = wire::decode_payload(type, r);
    if (!r.done()) throw CodecError(CodecError::Kind::TrailingGarbage, "payload has unread bytes");
    return msg;
}

}  // namespace detail

/// Decodes exactly one frame; anything before or after it is an error.
inline Message decode(ByteView data) {
    detail::check_magic(data);
    if (data.size() < frame_header_size) throw CodecError(CodecError::Kind::Truncated, "frame header incomplete");
    auto type = data[4];
    auto len = detail::declared_length(data);
    if (data.size() - frame_header_size < len) throw CodecError(CodecError::Kind::Truncated, "frame shorter than declared");
    if (data.size() - frame_header_size > len)
        throw CodecError(CodecError::Kind::TrailingGarbage, "bytes after end of frame");
    return detail::decode_frame_body(type, data.subspan(frame_header_size, len));
}

/// Accumulates a byte stream and yields complete frames as they arrive.
class FrameDecoder {
public:
    /// Frames declaring a payload above `max_payload` are rejected as Malformed.
    explicit FrameDecoder(std::size_t max_payload = std::size_t{1} << 20) : max_payload_(max_payload) {}

    void feed(ByteView chunk) { buf_.insert(buf_.end(), chunk.begin(), chunk.end()); }

    /// Next complete frame's message, or nullopt if more bytes are needed.
    std::optional<Message> next() {
        auto frame = next_frame();
        if (!frame) return std::nullopt;
        return decode(*frame);
    }

    /// Next complete frame's raw bytes.
    std::optional<Bytes> next_frame() {
        if (buf_.empty()) return std::nullopt;
        detail::check_magic(buf_);
        if (buf_.size() < frame_header_size) return std::nullopt;
        auto declared = detail::declared_length(buf_);
        if (declared > max_payload_) throw CodecError(CodecError::Kind::Malformed, "frame payload too large");
        auto total = frame_header_size + declared;
        if (buf_.size() < total) return std::nullopt;
        Bytes frame(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(total));
        buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(total));
        return frame;
    }

    std::size_t buffered() const noexcept { return buf_.size(); }

private:
    std::size_t max_payload_;
    Bytes buf_;
};

// Sealed bodies open to a single plaintext layout each. A leading label
// byte keeps one body kind from parsing as another.

namespace body {

enum Label : std::uint8_t {
    ticket = 0xB1,
    authenticator,
    as_reply,
    tgs_reply,
    forwarded_passwords,
    forwarded_k3,
    challenge,
    challenge_response,
    mutual_auth,
};

inline Bytes encode(const TicketBody& b) {
    ByteWriter w;
    w.u8(ticket);
    wire::put(w, b.client);
    wire::put(w, b.client_addr);
    wire::put(w, b.validity);
    wire::put(w, b.session_key);
    return std::move(w).take();
}
inline Bytes encode(const AuthenticatorBody& b) {
    ByteWriter w;
    w.u8(authenticator);
    wire::put(w, b.client);
    wire::put(w, b.client_addr);
    w.i64(b.created_at);
    return std::move(w).take();
}
inline Bytes encode(const AsReplyPart& b) {
    ByteWriter w;
    w.u8(as_reply);
    wire::put(w, b.session_key);
    wire::put(w, b.target_tgs);
    w.u64(b.n1);
    wire::put(w, b.validity);
    return std::move(w).take();
}
inline Bytes encode(const TgsReplyPart& b) {
    ByteWriter w;
    w.u8(tgs_reply);
    w.u64(b.n2);
    wire::put(w, b.target_v);
    wire::put(w, b.session_key);
    wire::put(w, b.validity);
    return std::move(w).take();
}
inline Bytes encode(const ForwardedPasswords& b) {
    ByteWriter w;
    w.u8(forwarded_passwords);
    wire::put(w, b.client);
    wire::put(w, b.k2);
    wire::put(w, b.k3);
    return std::move(w).take();
}
inline Bytes encode(const ForwardedK3& b) {
    ByteWriter w;
    w.u8(forwarded_k3);
    wire::put(w, b.client);
    wire::put(w, b.k3);
    return std::move(w).take();
}
inline Bytes encode(const ChallengeBody& b) {
    ByteWriter w;
    w.u8(challenge);
    wire::put(w, b.client);
    w.u64(b.n3);
    return std::move(w).take();
}
inline Bytes encode(const ChallengeResponseBody& b) {
    ByteWriter w;
    w.u8(challenge_response);
    wire::put(w, b.k3);
    w.i64(b.t5);
    return std::move(w).take();
}
inline Bytes encode(const MutualAuthBody& b) {
    ByteWriter w;
    w.u8(mutual_auth);
    w.i64(b.value);
    return std::move(w).take();
}

template <typename T>
T decode(ByteView data);

namespace detail {
template <typename F>
auto parse(ByteView data, Label expected, F&& fields) {
    ByteReader r(data);
    if (r.u8() != expected) throw CodecError(CodecError::Kind::Malformed, "sealed body has the wrong label");
    auto out = fields(r);
    if (!r.done()) throw CodecError(CodecError::Kind::TrailingGarbage, "sealed body has unread bytes");
    return out;
}
}  // namespace detail

template <>
inline TicketBody decode<TicketBody>(ByteView data) {
    return detail::parse(data, ticket, [](ByteReader& r) {
        auto client = wire::get<PrincipalId>(r);
        auto addr = wire::get<NetworkAddress>(r);
        auto validity = wire::get<Lifetime>(r);
        auto key = wire::get<SymmetricKey>(r);
        return TicketBody{std::move(client), std::move(addr), validity, key};
    });
}
template <>
inline AuthenticatorBody decode<AuthenticatorBody>(ByteView data) {
    return detail::parse(data, authenticator, [](ByteReader& r) {
        auto client = wire::get<PrincipalId>(r);
        auto addr = wire::get<NetworkAddress>(r);
        auto ts = r.i64();
        return AuthenticatorBody{std::move(client), std::move(addr), ts};
    });
}
template <>
inline AsReplyPart decode<AsReplyPart>(ByteView data) {
    return detail::parse(data, as_reply, [](ByteReader& r) {
        auto key = wire::get<SymmetricKey>(r);
        auto tgs = wire::get<PrincipalId>(r);
        auto n1 = r.u64();
        auto validity = wire::get<Lifetime>(r);
        return AsReplyPart{key, std::move(tgs), n1, validity};
    });
}
template <>
inline TgsReplyPart decode<TgsReplyPart>(ByteView data) {
    return detail::parse(data, tgs_reply, [](ByteReader& r) {
        auto n2 = r.u64();
        auto v = wire::get<PrincipalId>(r);
        auto key = wire::get<SymmetricKey>(r);
        auto validity = wire::get<Lifetime>(r);
        return TgsReplyPart{n2, std::move(v), key, validity};
    });
}
template <>
inline ForwardedPasswords decode<ForwardedPasswords>(ByteView data) {
    return detail::parse(data, forwarded_passwords, [](ByteReader& r) {
        auto client = wire::get<PrincipalId>(r);
        auto k2 = wire::get<SymmetricKey>(r);
        auto k3 = wire::get<SymmetricKey>(r);
        k2.origin = k3.origin = KeyOrigin::password_derived;
        return ForwardedPasswords{std::move(client), k2, k3};
    });
}
template <>
inline ForwardedK3 decode<ForwardedK3>(ByteView data) {
    return detail::parse(data, forwarded_k3, [](ByteReader& r) {
        auto client = wire::get<PrincipalId>(r);
        auto k3 = wire::get<SymmetricKey>(r);
        k3.origin = KeyOrigin::password_derived;
        return ForwardedK3{std::move(client), k3};
    });
}
template <>
inline ChallengeBody decode<ChallengeBody>(ByteView data) {
    return detail::parse(data, challenge, [](ByteReader& r) {
        auto client = wire::get<PrincipalId>(r);
        auto n3 = r.u64();
        return ChallengeBody{std::move(client), n3};
    });
}
template <>
inline ChallengeResponseBody decode<ChallengeResponseBody>(ByteView data) {
    return detail::parse(data, challenge_response, [](ByteReader& r) {
        auto k3 = wire::get<SymmetricKey>(r);
        k3.origin = KeyOrigin::password_derived;
        auto t5 = r.i64();
        return ChallengeResponseBody{k3, t5};
    });
}
template <>
inline MutualAuthBody decode<MutualAuthBody>(ByteView data) {
    return detail::parse(data, mutual_auth, [](ByteReader& r) { return MutualAuthBody{r.i64()}; });
}

}  // namespace body

/// Seals a plaintext body under `key`.
template <typename Body>
SealedBox seal_body(const SymmetricKey& key, const Body& b, NonceSource& nonces) {
    return seal(key, body::encode(b), nonces);
}

/// Opens and parses; AuthenticationFailure on wrong key or tampering.
template <typename Body>
Body open_body(const SymmetricKey& key, const SealedBox& box) {
    return body::decode<Body>(open(key, box));
}

}  // namespace kerbtrip
