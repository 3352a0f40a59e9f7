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

#include <cstdint>
#include <sstream>
#include <string>
#include <variant>

#include "kerbtrip/crypto.hpp"
#include "kerbtrip/types.hpp"

namespace kerbtrip {

// Sealed envelopes. Each wraps a SealedBox whose plaintext is one of the
// body structs below; the comment on each names the sealing key.

struct TicketTgs {  // TicketBody under K_tgs
    SealedBox sealed;
    bool operator==(const TicketTgs&) const = default;
};

struct TicketV {  // TicketBody under K_v
    SealedBox sealed;
    bool operator==(const TicketV&) const = default;
};

struct Authenticator {  // AuthenticatorBody under the session key
    SealedBox sealed;
    bool operator==(const Authenticator&) const = default;
};

// Plaintext bodies.

struct TicketBody {
    PrincipalId client;
    NetworkAddress client_addr;
    Lifetime validity;
    SymmetricKey session_key;
    bool operator==(const TicketBody&) const = default;
};

struct AuthenticatorBody {
    PrincipalId client;
    NetworkAddress client_addr;
    Timestamp created_at;
    bool operator==(const AuthenticatorBody&) const = default;
};

struct AsReplyPart {
    SymmetricKey session_key;
    PrincipalId target_tgs;
    Nonce n1;
    Lifetime validity;
    bool operator==(const AsReplyPart&) const = default;
};

struct TgsReplyPart {
    Nonce n2;
    PrincipalId target_v;
    SymmetricKey session_key;
    Lifetime validity;
    bool operator==(const TgsReplyPart&) const = default;
};

struct ForwardedPasswords {
    PrincipalId client;
    SymmetricKey k2;
    SymmetricKey k3;
    bool operator==(const ForwardedPasswords&) const = default;
};

struct ForwardedK3 {
    PrincipalId client;
    SymmetricKey k3;
    bool operator==(const ForwardedK3&) const = default;
};

struct ChallengeBody {
    PrincipalId client;
    Nonce n3;
    bool operator==(const ChallengeBody&) const = default;
};

struct ChallengeResponseBody {
    SymmetricKey k3;
    Timestamp t5;
    bool operator==(const ChallengeResponseBody&) const = default;
};

struct MutualAuthBody {
    Timestamp value;
    bool operator==(const MutualAuthBody&) const = default;
};

enum class Incident : std::uint8_t { timeout = 1, bad_password = 2 };

inline std::string_view to_string(Incident i) { return i == Incident::timeout ? "timeout" : "bad_password"; }

struct AlertPayload {
    PrincipalId reporter;
    NetworkAddress suspect_addr;
    PrincipalId client;
    Incident incident;
    bool operator==(const AlertPayload&) const = default;
};

// Wire messages. Baseline and triple messages of the same shape share a
// template and differ only in their type byte.

template <std::uint8_t Tag>
struct AsRequest {
    static constexpr std::uint8_t type_byte = Tag;
    PrincipalId client;
    PrincipalId target_tgs;
    Nonce n1;
    Lifetime requested;
    bool operator==(const AsRequest&) const = default;
};

template <std::uint8_t Tag>
struct AsReply {  // enc: AsReplyPart under the client's k1
    static constexpr std::uint8_t type_byte = Tag;
    PrincipalId client;
    TicketTgs ticket;
    SealedBox enc;
    bool operator==(const AsReply&) const = default;
};

template <std::uint8_t Tag>
struct TgsRequest {
    static constexpr std::uint8_t type_byte = Tag;
    TicketTgs ticket;
    PrincipalId target_v;
    Nonce n2;
    Authenticator authenticator;
    bool operator==(const TgsRequest&) const = default;
};

template <std::uint8_t Tag>
struct TgsReply {  // enc: TgsReplyPart under k2 (triple) or K_c,tgs (baseline)
    static constexpr std::uint8_t type_byte = Tag;
    PrincipalId client;
    TicketV ticket;
    SealedBox enc;
    bool operator==(const TgsReply&) const = default;
};

template <std::uint8_t Tag>
struct ApRequest {
    static constexpr std::uint8_t type_byte = Tag;
    TicketV ticket;
    Authenticator authenticator;
    bool operator==(const ApRequest&) const = default;
};

template <std::uint8_t Tag>
struct SealedOnly {
    static constexpr std::uint8_t type_byte = Tag;
    SealedBox enc;
    bool operator==(const SealedOnly&) const = default;
};

template <std::uint8_t Tag>
struct Alert {
    static constexpr std::uint8_t type_byte = Tag;
    AlertPayload alert;
    bool operator==(const Alert&) const = default;
};

struct ChallengeReply {  // M7; enc: ChallengeResponseBody under K_c,v
    static constexpr std::uint8_t type_byte = 0x09;
    PrincipalId client;
    SealedBox enc;
    bool operator==(const ChallengeReply&) const = default;
};

// Triple-password variant.
using M1 = AsRequest<0x01>;
using M2_1 = AsReply<0x02>;
using M2_2 = SealedOnly<0x03>;  // ForwardedPasswords under K_tgs
using M3 = TgsRequest<0x04>;
using M4_1 = TgsReply<0x05>;
using M4_2 = SealedOnly<0x06>;  // ForwardedK3 under K_v
using M5 = ApRequest<0x07>;
using M6 = SealedOnly<0x08>;  // ChallengeBody under K_c,v
using M7 = ChallengeReply;
using M8 = SealedOnly<0x0A>;  // MutualAuthBody under K_c,v
using M9 = Alert<0x0B>;
using M10 = Alert<0x0C>;

// Baseline variant.
using B1 = AsRequest<0x11>;
using B2 = AsReply<0x12>;
using B3 = TgsRequest<0x13>;
using B4 = TgsReply<0x14>;
using B5 = ApRequest<0x15>;
using B6 = SealedOnly<0x16>;  // MutualAuthBody under K_c,v

using Message = std::variant<M1, M2_1, M2_2, M3, M4_1, M4_2, M5, M6, M7, M8, M9, M10, B1, B2, B3, B4, B5, B6>;

inline std::uint8_t type_byte(const Message& m) {
    return std::visit([](const auto& x) { return std::decay_t<decltype(x)>::type_byte; }, m);
}

inline std::string_view type_name(std::uint8_t type) {
    switch (type) {
        case 0x01: return "M1";
        case 0x02: return "M2.1";
        case 0x03: return "M2.2";
        case 0x04: return "M3";
        case 0x05: return "M4.1";
        case 0x06: return "M4.2";
        case 0x07: return "M5";
        case 0x08: return "M6";
        case 0x09: return "M7";
        case 0x0A: return "M8";
        case 0x0B: return "M9";
        case 0x0C: return "M10";
        case 0x11: return "B1";
        case 0x12: return "B2";
        case 0x13: return "B3";
        case 0x14: return "B4";
        case 0x15: return "B5";
        case 0x16: return "B6";
        default: return "?";
    }
}

inline std::string_view type_name(const Message& m) { return type_name(type_byte(m)); }

/// Clear-text fields of a message, with every sealed part elided to its
/// length. Two runs that differ only in ciphertext describe identically.
inline std::string describe(const Message& m) {
    std::ostringstream os;
    os << type_name(m);
    auto sealed = [&](const char* field, const SealedBox& b) { os << ' ' << field << "=<sealed:" << b.ciphertext.size() << '>'; };
    std::visit(
        [&](const auto& x) {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, M1> || std::is_same_v<T, B1>) {
                os << " client=" << x.client.str() << " target_tgs=" << x.target_tgs.str() << " n1=" << x.n1
                   << " lifetime=" << x.requested.start << ".." << x.requested.expiry;
            } else if constexpr (std::is_same_v<T, M2_1> || std::is_same_v<T, B2> || std::is_same_v<T, M4_1> ||
                                 std::is_same_v<T, B4>) {
                os << " client=" << x.client.str();
                sealed("ticket", x.ticket.sealed);
                sealed("enc", x.enc);
            } else if constexpr (std::is_same_v<T, M3> || std::is_same_v<T, B3>) {
                sealed("ticket", x.ticket.sealed);
                os << " target_v=" << x.target_v.str() << " n2=" << x.n2;
                sealed("authenticator", x.authenticator.sealed);
            } else if constexpr (std::is_same_v<T, M5> || std::is_same_v<T, B5>) {
                sealed("ticket", x.ticket.sealed);
                sealed("authenticator", x.authenticator.sealed);
            } else if constexpr (std::is_same_v<T, M7>) {
                os << " client=" << x.client.str();
                sealed("enc", x.enc);
            } else if constexpr (std::is_same_v<T, M9> || std::is_same_v<T, M10>) {
                os << " reporter=" << x.alert.reporter.str() << " suspect=" << x.alert.suspect_addr.str()
                   << " client=" << x.alert.client.str() << " incident=" << to_string(x.alert.incident);
            } else {
                sealed("enc", x.enc);
            }
        },
        m);
    return os.str();
}

}  // namespace kerbtrip
