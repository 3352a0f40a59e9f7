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

#include <optional>
#include <string_view>
#include <variant>

#include "kerbtrip/codec.hpp"

namespace kerbtrip {

inline TicketTgs make_ticket_tgs(const SymmetricKey& tgs_key, const PrincipalId& client, const NetworkAddress& addr,
                                 Lifetime validity, const SymmetricKey& session_key, NonceSource& nonces) {
    return {seal_body(tgs_key, TicketBody{client, addr, validity, session_key}, nonces)};
}

inline TicketV make_ticket_v(const SymmetricKey& server_key, const PrincipalId& client, const NetworkAddress& addr,
                             Lifetime validity, const SymmetricKey& session_key, NonceSource& nonces) {
    return {seal_body(server_key, TicketBody{client, addr, validity, session_key}, nonces)};
}

inline TicketBody open_ticket(const SymmetricKey& key, const TicketTgs& t) { return open_body<TicketBody>(key, t.sealed); }
inline TicketBody open_ticket(const SymmetricKey& key, const TicketV& t) { return open_body<TicketBody>(key, t.sealed); }

inline Authenticator make_authenticator(const SymmetricKey& session_key, const PrincipalId& client,
                                        const NetworkAddress& addr, Timestamp now, NonceSource& nonces) {
    return {seal_body(session_key, AuthenticatorBody{client, addr, now}, nonces)};
}

/// Reasons a principal refuses a message. Each is logged distinctly.
enum class DenyReason {
    UnknownClient,
    UnknownTgs,
    UnknownServer,
    TicketAuthFailure,
    AuthenticatorAuthFailure,
    AuthenticatorMismatch,
    AddressMismatch,
    StaleAuthenticator,
    ExpiredTicket,
    NoForwardedPassword,
    ChallengePending,
    NoPendingChallenge,
    EnvelopeAuthFailure,
    WrongVariant,
    UnexpectedMessage,
};

inline std::string_view to_string(DenyReason r) {
    switch (r) {
        case DenyReason::UnknownClient: return "UnknownClient";
        case DenyReason::UnknownTgs: return "UnknownTgs";
        case DenyReason::UnknownServer: return "UnknownServer";
        case DenyReason::TicketAuthFailure: return "TicketAuthFailure";
        case DenyReason::AuthenticatorAuthFailure: return "AuthenticatorAuthFailure";
        case DenyReason::AuthenticatorMismatch: return "AuthenticatorMismatch";
        case DenyReason::AddressMismatch: return "AddressMismatch";
        case DenyReason::StaleAuthenticator: return "StaleAuthenticator";
        case DenyReason::ExpiredTicket: return "ExpiredTicket";
        case DenyReason::NoForwardedPassword: return "NoForwardedPassword";
        case DenyReason::ChallengePending: return "ChallengePending";
        case DenyReason::NoPendingChallenge: return "NoPendingChallenge";
        case DenyReason::EnvelopeAuthFailure: return "EnvelopeAuthFailure";
        case DenyReason::WrongVariant: return "WrongVariant";
        case DenyReason::UnexpectedMessage: return "UnexpectedMessage";
    }
    return "?";
}

/// Validated contents of a ticket + authenticator presentation.
struct Presentation {
    TicketBody ticket;
    AuthenticatorBody authenticator;
};

/// The one validation path for TGS and V in both variants: open the ticket
/// under the service's long-term key, open the authenticator under the
/// ticket's session key, then check identity, source address, authenticator
/// freshness and ticket validity, in that order.
inline std::variant<Presentation, DenyReason> validate_presentation(const SymmetricKey& service_key,
                                                                    const SealedBox& ticket,
                                                                    const Authenticator& authenticator,
                                                                    const NetworkAddress& source, Timestamp now,
                                                                    std::int64_t freshness_window) {
    std::optional<TicketBody> tb;
    try {
        tb = open_body<TicketBody>(service_key, ticket);
    } catch (const Error&) {
        return DenyReason::TicketAuthFailure;
    }
    std::optional<AuthenticatorBody> ab;
    try {
        ab = open_body<AuthenticatorBody>(tb->session_key, authenticator.sealed);
    } catch (const Error&) {
        return DenyReason::AuthenticatorAuthFailure;
    }
    if (ab->client != tb->client) return DenyReason::AuthenticatorMismatch;
    if (ab->client_addr != tb->client_addr || source != tb->client_addr) return DenyReason::AddressMismatch;
    if (!check_freshness(ab->created_at, now, freshness_window)) return DenyReason::StaleAuthenticator;
    if (!tb->validity.contains(now)) return DenyReason::ExpiredTicket;
    return Presentation{std::move(*tb), std::move(*ab)};
}

}  // namespace kerbtrip
