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

#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "kerbtrip/tickets.hpp"

namespace kerbtrip {

/// A message a handler wants sent. `to` empty means "reply to whoever sent
/// the message being handled".
struct Outbound {
    std::optional<PrincipalId> to;
    Message msg;
};

struct Grant {
    PrincipalId client;
    PrincipalId server;
    Timestamp at;
};

enum class Suspicion { password_compromise, ticket_replay };

inline std::string_view to_string(Suspicion s) {
    return s == Suspicion::password_compromise ? "password_compromise" : "ticket_replay";
}

/// Raised by AS when an alert reaches it.
struct CompromiseNotice {
    PrincipalId client;
    NetworkAddress suspect_addr;
    Incident incident;
    Suspicion suspicion;
    bool unknown_client = false;
};

/// Everything a handler produced for one input.
struct Reaction {
    std::vector<Outbound> out;
    std::optional<DenyReason> denied;
    std::optional<Grant> grant;
    std::vector<CompromiseNotice> notices;

    static Reaction deny(DenyReason r) {
        Reaction x;
        x.denied = r;
        return x;
    }
    bool accepted() const noexcept { return !denied; }
};

class DuplicateClient : public Error {
public:
    explicit DuplicateClient(const PrincipalId& p) : Error("client already registered: " + p.str()) {}
};

struct CredentialRecord {
    PrincipalId client;
    SymmetricKey k1, k2, k3;
};

namespace detail {

template <typename T>
constexpr bool is_baseline_type = (T::type_byte & 0xF0) == 0x10;

template <typename T>
bool variant_matches(Variant v) {
    return is_baseline_type<T> == (v == Variant::baseline);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Authentication server

class AuthServer {
public:
    AuthServer(PrincipalId id, Variant variant, Timing timing, RandomSource rng, NonceSource nonces)
        : id_(std::move(id)), variant_(variant), timing_(timing), rng_(rng), nonces_(nonces) {}

    const PrincipalId& id() const noexcept { return id_; }
    Variant variant() const noexcept { return variant_; }

    void add_tgs(const PrincipalId& tgs, const SymmetricKey& key) { tgs_keys_.insert_or_assign(tgs, key); }

    /// Registration with three passwords; only the derived keys are kept.
    void register_client(const PrincipalId& client, std::string_view pw1, std::string_view pw2, std::string_view pw3) {
        register_keys({client, derive_key(pw1, client, 1), derive_key(pw2, client, 2), derive_key(pw3, client, 3)});
    }

    void register_keys(CredentialRecord rec) {
        if (credentials_.contains(rec.client)) throw DuplicateClient(rec.client);
        auto id = rec.client;
        credentials_.emplace(std::move(id), std::move(rec));
    }

    const std::map<PrincipalId, CredentialRecord>& credentials() const noexcept { return credentials_; }
    const std::vector<AlertPayload>& alerts_received() const noexcept { return alerts_; }

    /// Session keys issued so far, in order.
    const std::vector<std::pair<PrincipalId, SymmetricKey>>& issued_sessions() const noexcept { return issued_; }

    /// M1 -> M2.1 (to client) + M2.2 (to TGS); B1 -> B2.
    template <std::uint8_t Tag>
    Reaction handle_request(const AsRequest<Tag>& req, const NetworkAddress& source, Timestamp now) {
        if (!detail::variant_matches<AsRequest<Tag>>(variant_)) return Reaction::deny(DenyReason::WrongVariant);
        auto cred = credentials_.find(req.client);
        if (cred == credentials_.end()) return Reaction::deny(DenyReason::UnknownClient);
        auto tgs_key = tgs_keys_.find(req.target_tgs);
        if (tgs_key == tgs_keys_.end()) return Reaction::deny(DenyReason::UnknownTgs);

        auto expiry = now + timing_.tgt_lifetime;
        if (req.requested.expiry > now) expiry = std::min(expiry, req.requested.expiry);
        Lifetime validity(now, expiry);
        auto session = gen_session_key(rng_);
        issued_.emplace_back(req.client, session);

        auto ticket = make_ticket_tgs(tgs_key->second, req.client, source, validity, session, nonces_);
        auto enc = seal_body(cred->second.k1, AsReplyPart{session, req.target_tgs, req.n1, validity}, nonces_);

        Reaction r;
        if (variant_ == Variant::baseline) {
            r.out.push_back({std::nullopt, B2{req.client, std::move(ticket), std::move(enc)}});
        } else {
            r.out.push_back({std::nullopt, M2_1{req.client, std::move(ticket), std::move(enc)}});
            auto fwd = seal_body(tgs_key->second, ForwardedPasswords{req.client, cred->second.k2, cred->second.k3},
                                 nonces_);
            r.out.push_back({req.target_tgs, M2_2{std::move(fwd)}});
        }
        return r;
    }

    /// Records the alert and tells the operator whose credentials are suspect.
    Reaction handle_m10(const M10& m) {
        alerts_.push_back(m.alert);
        CompromiseNotice n{m.alert.client, m.alert.suspect_addr, m.alert.incident,
                           m.alert.incident == Incident::bad_password ? Suspicion::password_compromise
                                                                      : Suspicion::ticket_replay,
                           !credentials_.contains(m.alert.client)};
        Reaction r;
        r.notices.push_back(std::move(n));
        return r;
    }

    Reaction handle(const Message& msg, const NetworkAddress& source, Timestamp now) {
        return std::visit(
            [&](const auto& m) -> Reaction {
                using T = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<T, M1> || std::is_same_v<T, B1>)
                    return handle_request(m, source, now);
                else if constexpr (std::is_same_v<T, M10>)
                    return handle_m10(m);
                else
                    return Reaction::deny(DenyReason::UnexpectedMessage);
            },
            msg);
    }

private:
    PrincipalId id_;
    Variant variant_;
    Timing timing_;
    RandomSource rng_;
    NonceSource nonces_;
    std::map<PrincipalId, CredentialRecord> credentials_;
    std::map<PrincipalId, SymmetricKey> tgs_keys_;
    std::vector<AlertPayload> alerts_;
    std::vector<std::pair<PrincipalId, SymmetricKey>> issued_;
};

// ---------------------------------------------------------------------------
// Ticket granting server

struct ForwardedPair {
    SymmetricKey k2, k3;
};

class TicketGrantingServer {
public:
    TicketGrantingServer(PrincipalId id, SymmetricKey own_key, PrincipalId as_id, Variant variant, Timing timing,
                         RandomSource rng, NonceSource nonces)
        : id_(std::move(id)), own_key_(own_key), as_id_(std::move(as_id)), variant_(variant), timing_(timing),
          rng_(rng), nonces_(nonces) {}

    const PrincipalId& id() const noexcept { return id_; }

    void add_server(const PrincipalId& v, const SymmetricKey& key) { server_keys_.insert_or_assign(v, key); }

    const std::map<PrincipalId, ForwardedPair>& forwarded_passwords() const noexcept { return forwarded_; }
    const std::vector<std::pair<PrincipalId, SymmetricKey>>& issued_sessions() const noexcept { return issued_; }

    /// Stores k2/k3 sent by AS; the latest forward for a client wins.
    Reaction handle_m2_2(const M2_2& m) {
        if (variant_ != Variant::triple) return Reaction::deny(DenyReason::WrongVariant);
        try {
            auto fp = open_body<ForwardedPasswords>(own_key_, m.enc);
            forwarded_.insert_or_assign(fp.client, ForwardedPair{fp.k2, fp.k3});
        } catch (const Error&) {
            return Reaction::deny(DenyReason::EnvelopeAuthFailure);
        }
        return {};
    }

    /// M3 -> M4.1 (to client) + M4.2 (to V); B3 -> B4.
    template <std::uint8_t Tag>
    Reaction handle_request(const TgsRequest<Tag>& req, const NetworkAddress& source, Timestamp now) {
        if (!detail::variant_matches<TgsRequest<Tag>>(variant_)) return Reaction::deny(DenyReason::WrongVariant);
        auto checked = validate_presentation(own_key_, req.ticket.sealed, req.authenticator, source, now,
                                             timing_.freshness_window);
        if (auto* why = std::get_if<DenyReason>(&checked)) return Reaction::deny(*why);
        const auto& tgt = std::get<Presentation>(checked).ticket;

        auto server_key = server_keys_.find(req.target_v);
        if (server_key == server_keys_.end()) return Reaction::deny(DenyReason::UnknownServer);
        const ForwardedPair* fwd = nullptr;
        if (variant_ == Variant::triple) {
            auto it = forwarded_.find(tgt.client);
            if (it == forwarded_.end()) return Reaction::deny(DenyReason::NoForwardedPassword);
            fwd = &it->second;
        }

        Lifetime validity(now, std::min(now + timing_.service_lifetime, tgt.validity.expiry));
        auto session = gen_session_key(rng_);
        issued_.emplace_back(tgt.client, session);
        auto ticket = make_ticket_v(server_key->second, tgt.client, tgt.client_addr, validity, session, nonces_);
        TgsReplyPart part{req.n2, req.target_v, session, validity};

        Reaction r;
        if (variant_ == Variant::baseline) {
            r.out.push_back({std::nullopt, B4{tgt.client, std::move(ticket), seal_body(tgt.session_key, part, nonces_)}});
        } else {
            r.out.push_back({std::nullopt, M4_1{tgt.client, std::move(ticket), seal_body(fwd->k2, part, nonces_)}});
            r.out.push_back({req.target_v, M4_2{seal_body(server_key->second, ForwardedK3{tgt.client, fwd->k3}, nonces_)}});
        }
        return r;
    }

    /// Relays an alert from V to AS unchanged.
    Reaction handle_m9(const M9& m) {
        Reaction r;
        r.out.push_back({as_id_, M10{m.alert}});
        return r;
    }

    Reaction handle(const Message& msg, const NetworkAddress& source, Timestamp now) {
        return std::visit(
            [&](const auto& m) -> Reaction {
                using T = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<T, M2_2>)
                    return handle_m2_2(m);
                else if constexpr (std::is_same_v<T, M3> || std::is_same_v<T, B3>)
                    return handle_request(m, source, now);
                else if constexpr (std::is_same_v<T, M9>)
                    return handle_m9(m);
                else
                    return Reaction::deny(DenyReason::UnexpectedMessage);
            },
            msg);
    }

private:
    PrincipalId id_;
    SymmetricKey own_key_;
    PrincipalId as_id_;
    Variant variant_;
    Timing timing_;
    RandomSource rng_;
    NonceSource nonces_;
    std::map<PrincipalId, SymmetricKey> server_keys_;
    std::map<PrincipalId, ForwardedPair> forwarded_;
    std::vector<std::pair<PrincipalId, SymmetricKey>> issued_;
};

// ---------------------------------------------------------------------------
// Application server (V)

struct PendingChallenge {
    Nonce n3;
    Timestamp deadline;
    NetworkAddress suspect_addr;
    SymmetricKey session_key;
};

class ApplicationServer {
public:
    ApplicationServer(PrincipalId id, SymmetricKey own_key, PrincipalId tgs_id, Variant variant, Timing timing,
                      RandomSource rng, NonceSource nonces)
        : id_(std::move(id)), own_key_(own_key), tgs_id_(std::move(tgs_id)), variant_(variant), timing_(timing),
          rng_(rng), nonces_(nonces) {}

    const PrincipalId& id() const noexcept { return id_; }
    const Timing& timing() const noexcept { return timing_; }

    const std::map<PrincipalId, SymmetricKey>& forwarded_k3() const noexcept { return forwarded_k3_; }
    const std::map<PrincipalId, PendingChallenge>& pending_challenges() const noexcept { return pending_; }
    const std::vector<Grant>& grants() const noexcept { return grants_; }

    Reaction handle_m4_2(const M4_2& m) {
        if (variant_ != Variant::triple) return Reaction::deny(DenyReason::WrongVariant);
        try {
            auto fk = open_body<ForwardedK3>(own_key_, m.enc);
            forwarded_k3_.insert_or_assign(fk.client, fk.k3);
        } catch (const Error&) {
            return Reaction::deny(DenyReason::EnvelopeAuthFailure);
        }
        return {};
    }

    /// Triple: validate, then challenge for k3 and start the timer.
    Reaction handle_m5(const M5& m, const NetworkAddress& source, Timestamp now) {
        if (variant_ != Variant::triple) return Reaction::deny(DenyReason::WrongVariant);
        auto checked = validate_presentation(own_key_, m.ticket.sealed, m.authenticator, source, now,
                                             timing_.freshness_window);
        if (auto* why = std::get_if<DenyReason>(&checked)) return Reaction::deny(*why);
        const auto& ticket = std::get<Presentation>(checked).ticket;
        if (!forwarded_k3_.contains(ticket.client)) return Reaction::deny(DenyReason::NoForwardedPassword);
        if (pending_.contains(ticket.client)) return Reaction::deny(DenyReason::ChallengePending);

        auto n3 = rng_.next_u64();
        pending_.emplace(ticket.client, PendingChallenge{n3, now + timing_.timer_duration, source, ticket.session_key});
        Reaction r;
        r.out.push_back({std::nullopt, M6{seal_body(ticket.session_key, ChallengeBody{ticket.client, n3}, nonces_)}});
        return r;
    }

    /// Baseline: validate and grant at once, answering with timestamp + 1.
    Reaction handle_b5(const B5& m, const NetworkAddress& source, Timestamp now) {
        if (variant_ != Variant::baseline) return Reaction::deny(DenyReason::WrongVariant);
        auto checked = validate_presentation(own_key_, m.ticket.sealed, m.authenticator, source, now,
                                             timing_.freshness_window);
        if (auto* why = std::get_if<DenyReason>(&checked)) return Reaction::deny(*why);
        const auto& p = std::get<Presentation>(checked);
        Reaction r;
        r.out.push_back({std::nullopt, B6{seal_body(p.ticket.session_key, MutualAuthBody{p.authenticator.created_at + 1}, nonces_)}});
        r.grant = record_grant(p.ticket.client, now);
        return r;
    }

    /// The only path that grants service in the triple variant.
    Reaction handle_m7(const M7& m, Timestamp now) {
        if (variant_ != Variant::triple) return Reaction::deny(DenyReason::WrongVariant);
        auto it = pending_.find(m.client);
        if (it == pending_.end()) return Reaction::deny(DenyReason::NoPendingChallenge);
        if (now > it->second.deadline) return expire(it);

        std::optional<ChallengeResponseBody> resp;
        try {
            resp = open_body<ChallengeResponseBody>(it->second.session_key, m.enc);
        } catch (const Error&) {
            // Not from the session holder; the timer keeps running.
            return Reaction::deny(DenyReason::EnvelopeAuthFailure);
        }

        auto expected = forwarded_k3_.find(m.client);
        Reaction r;
        if (expected != forwarded_k3_.end() && expected->second == resp->k3) {
            r.out.push_back({std::nullopt, M8{seal_body(it->second.session_key, MutualAuthBody{resp->t5 + 1}, nonces_)}});
            r.grant = record_grant(m.client, now);
        } else {
            r.out.push_back({tgs_id_, M9{AlertPayload{id_, it->second.suspect_addr, m.client, Incident::bad_password}}});
        }
        pending_.erase(it);
        return r;
    }

    /// Timeout alerts for every challenge whose deadline has passed.
    Reaction tick(Timestamp now) {
        Reaction r;
        for (auto it = pending_.begin(); it != pending_.end();) {
            if (it->second.deadline < now) {
                r.out.push_back({tgs_id_, M9{AlertPayload{id_, it->second.suspect_addr, it->first, Incident::timeout}}});
                it = pending_.erase(it);
            } else {
                ++it;
            }
        }
        return r;
    }

    /// Earliest deadline among pending challenges.
    std::optional<Timestamp> next_deadline() const {
        std::optional<Timestamp> d;
        for (const auto& [_, c] : pending_)
            if (!d || c.deadline < *d) d = c.deadline;
        return d;
    }

    Reaction handle(const Message& msg, const NetworkAddress& source, Timestamp now) {
        return std::visit(
            [&](const auto& m) -> Reaction {
                using T = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<T, M4_2>)
                    return handle_m4_2(m);
                else if constexpr (std::is_same_v<T, M5>)
                    return handle_m5(m, source, now);
                else if constexpr (std::is_same_v<T, B5>)
                    return handle_b5(m, source, now);
                else if constexpr (std::is_same_v<T, M7>)
                    return handle_m7(m, now);
                else
                    return Reaction::deny(DenyReason::UnexpectedMessage);
            },
            msg);
    }

private:
    Grant record_grant(const PrincipalId& client, Timestamp now) {
        grants_.push_back({client, id_, now});
        return grants_.back();
    }

    Reaction expire(std::map<PrincipalId, PendingChallenge>::iterator it) {
        Reaction r;
        r.out.push_back({tgs_id_, M9{AlertPayload{id_, it->second.suspect_addr, it->first, Incident::timeout}}});
        pending_.erase(it);
        return r;
    }

    PrincipalId id_;
    SymmetricKey own_key_;
    PrincipalId tgs_id_;
    Variant variant_;
    Timing timing_;
    RandomSource rng_;
    NonceSource nonces_;
    std::map<PrincipalId, SymmetricKey> forwarded_k3_;
    std::map<PrincipalId, PendingChallenge> pending_;
    std::vector<Grant> grants_;
};

// ---------------------------------------------------------------------------
// Client

enum class ClientOutcome { Pending, MutualAuthOk, Failed };

enum class ClientFailure { None, OpenFailure, NonceMismatch, BadMutualAuth, UnexpectedMessage, Network };

inline std::string_view to_string(ClientFailure f) {
    switch (f) {
        case ClientFailure::None: return "None";
        case ClientFailure::OpenFailure: return "OpenFailure";
        case ClientFailure::NonceMismatch: return "NonceMismatch";
        case ClientFailure::BadMutualAuth: return "BadMutualAuth";
        case ClientFailure::UnexpectedMessage: return "UnexpectedMessage";
        case ClientFailure::Network: return "Network";
    }
    return "?";
}

struct ClientConfig {
    PrincipalId id;
    NetworkAddress addr;
    PrincipalId as_id;
    PrincipalId tgs_id;
    SymmetricKey k1, k2, k3;
    Variant variant = Variant::triple;
    Timing timing{};
};

/// Client workstation: drives M1 ... M8 (or B1 ... B6) one reply at a time.
class Client {
public:
    struct Tgt {
        TicketTgs ticket;
        SymmetricKey session_key;
        Lifetime validity;
    };
    struct ServiceTicket {
        TicketV ticket;
        SymmetricKey session_key;
        Lifetime validity;
    };

    Client(ClientConfig cfg, RandomSource rng, NonceSource nonces)
        : cfg_(std::move(cfg)), rng_(rng), nonces_(nonces) {}

    static ClientConfig config_from_passwords(PrincipalId id, NetworkAddress addr, PrincipalId as_id,
                                              PrincipalId tgs_id, std::string_view pw1, std::string_view pw2,
                                              std::string_view pw3, Variant variant, Timing timing = {}) {
        auto k1 = derive_key(pw1, id, 1);
        auto k2 = derive_key(pw2, id, 2);
        auto k3 = derive_key(pw3, id, 3);
        return {std::move(id), std::move(addr), std::move(as_id), std::move(tgs_id), k1, k2, k3, variant, timing};
    }

    const ClientConfig& config() const noexcept { return cfg_; }
    const PrincipalId& id() const noexcept { return cfg_.id; }
    ClientOutcome outcome() const noexcept { return outcome_; }
    ClientFailure failure() const noexcept { return failure_; }
    const std::optional<Tgt>& tgt() const noexcept { return tgt_; }
    const std::map<PrincipalId, ServiceTicket>& service_tickets() const noexcept { return service_; }
    /// Type bytes of every message this client has sent, in order.
    const std::vector<std::uint8_t>& sent() const noexcept { return sent_; }
    /// Value carried by the final mutual-authentication reply.
    std::optional<Timestamp> mutual_auth_value() const noexcept { return mutual_value_; }
    std::optional<Timestamp> mutual_auth_expected() const noexcept {
        return awaiting_ts_ ? std::optional<Timestamp>(*awaiting_ts_ + 1) : std::nullopt;
    }

    /// First request to AS.
    Outbound begin(const PrincipalId& target_v, Timestamp now) {
        target_v_ = target_v;
        n1_ = rng_.next_u64();
        Lifetime want(now, now + cfg_.timing.tgt_lifetime);
        if (cfg_.variant == Variant::baseline) return sent(cfg_.as_id, B1{cfg_.id, cfg_.tgs_id, *n1_, want});
        return sent(cfg_.as_id, M1{cfg_.id, cfg_.tgs_id, *n1_, want});
    }

    Reaction handle(const Message& msg, Timestamp now) {
        if (outcome_ != ClientOutcome::Pending) return Reaction::deny(DenyReason::UnexpectedMessage);
        return std::visit(
            [&](const auto& m) -> Reaction {
                using T = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<T, M2_1> || std::is_same_v<T, B2>)
                    return on_as_reply(m, now);
                else if constexpr (std::is_same_v<T, M4_1> || std::is_same_v<T, B4>)
                    return on_tgs_reply(m, now);
                else if constexpr (std::is_same_v<T, M6>)
                    return on_challenge(m, now);
                else if constexpr (std::is_same_v<T, M8> || std::is_same_v<T, B6>)
                    return detail::variant_matches<T>(cfg_.variant) ? on_mutual_auth(m.enc)
                                                                    : failed(ClientFailure::UnexpectedMessage);
                else
                    return Reaction::deny(DenyReason::UnexpectedMessage);
            },
            msg);
    }

    void fail(ClientFailure f) {
        outcome_ = ClientOutcome::Failed;
        failure_ = f;
    }

private:
    template <typename Msg>
    Outbound sent(const PrincipalId& to, Msg m) {
        sent_.push_back(Msg::type_byte);
        return {to, Message(std::move(m))};
    }

    Reaction failed(ClientFailure f) {
        fail(f);
        return Reaction::deny(DenyReason::UnexpectedMessage);
    }

    template <typename T>
    Reaction on_as_reply(const T& m, Timestamp now) {
        if (!detail::variant_matches<T>(cfg_.variant) || !n1_ || tgt_) return failed(ClientFailure::UnexpectedMessage);
        std::optional<AsReplyPart> part;
        try {
            part = open_body<AsReplyPart>(cfg_.k1, m.enc);
        } catch (const Error&) {
            return failed(ClientFailure::OpenFailure);
        }
        if (part->n1 != *n1_) return failed(ClientFailure::NonceMismatch);
        tgt_ = Tgt{m.ticket, part->session_key, part->validity};

        n2_ = rng_.next_u64();
        auto auth = make_authenticator(tgt_->session_key, cfg_.id, cfg_.addr, now, nonces_);
        Reaction r;
        if constexpr (std::is_same_v<T, B2>)
            r.out.push_back(sent(cfg_.tgs_id, B3{tgt_->ticket, *target_v_, *n2_, std::move(auth)}));
        else
            r.out.push_back(sent(cfg_.tgs_id, M3{tgt_->ticket, *target_v_, *n2_, std::move(auth)}));
        return r;
    }

    template <typename T>
    Reaction on_tgs_reply(const T& m, Timestamp now) {
        if (!detail::variant_matches<T>(cfg_.variant) || !n2_ || service_.contains(*target_v_))
            return failed(ClientFailure::UnexpectedMessage);
        // Baseline seals the service session key under K_c,tgs, triple under k2.
        const auto& key = cfg_.variant == Variant::baseline ? tgt_->session_key : cfg_.k2;
        std::optional<TgsReplyPart> part;
        try {
            part = open_body<TgsReplyPart>(key, m.enc);
        } catch (const Error&) {
            return failed(ClientFailure::OpenFailure);
        }
        if (part->n2 != *n2_) return failed(ClientFailure::NonceMismatch);
        auto& st = service_.insert_or_assign(*target_v_, ServiceTicket{m.ticket, part->session_key, part->validity})
                       .first->second;

        auto auth = make_authenticator(st.session_key, cfg_.id, cfg_.addr, now, nonces_);
        Reaction r;
        if constexpr (std::is_same_v<T, B4>) {
            awaiting_ts_ = now;
            r.out.push_back(sent(*target_v_, B5{st.ticket, std::move(auth)}));
        } else {
            r.out.push_back(sent(*target_v_, M5{st.ticket, std::move(auth)}));
        }
        return r;
    }

    Reaction on_challenge(const M6& m, Timestamp now) {
        auto st = service_.find(target_v_.value_or(cfg_.id));
        if (cfg_.variant != Variant::triple || st == service_.end()) return failed(ClientFailure::UnexpectedMessage);
        std::optional<ChallengeBody> ch;
        try {
            ch = open_body<ChallengeBody>(st->second.session_key, m.enc);
        } catch (const Error&) {
            return failed(ClientFailure::OpenFailure);
        }
        if (ch->client != cfg_.id) return failed(ClientFailure::UnexpectedMessage);
        awaiting_ts_ = now;
        Reaction r;
        r.out.push_back(sent(*target_v_, M7{cfg_.id, seal_body(st->second.session_key,
                                                                ChallengeResponseBody{cfg_.k3, now}, nonces_)}));
        return r;
    }

    Reaction on_mutual_auth(const SealedBox& enc) {
        auto st = service_.find(target_v_.value_or(cfg_.id));
        if (st == service_.end() || !awaiting_ts_) return failed(ClientFailure::UnexpectedMessage);
        std::optional<MutualAuthBody> body;
        try {
            body = open_body<MutualAuthBody>(st->second.session_key, enc);
        } catch (const Error&) {
            return failed(ClientFailure::OpenFailure);
        }
        mutual_value_ = body->value;
        if (body->value != *awaiting_ts_ + 1) return failed(ClientFailure::BadMutualAuth);
        outcome_ = ClientOutcome::MutualAuthOk;
        return {};
    }

    ClientConfig cfg_;
    RandomSource rng_;
    NonceSource nonces_;
    std::optional<PrincipalId> target_v_;
    std::optional<Nonce> n1_, n2_;
    std::optional<Tgt> tgt_;
    std::map<PrincipalId, ServiceTicket> service_;
    std::optional<Timestamp> awaiting_ts_;
    std::optional<Timestamp> mutual_value_;
    std::vector<std::uint8_t> sent_;
    ClientOutcome outcome_ = ClientOutcome::Pending;
    ClientFailure failure_ = ClientFailure::None;
};

/// Drives a client to completion against anything that can carry messages.
/// `mailbox.send(Outbound)` delivers a request; `mailbox.receive()` returns
/// the next reply or nullopt when the peer is gone. `on_step` sees every
/// message the client sends or receives.
template <typename Mailbox, typename Clock, typename OnStep>
ClientOutcome client_run(Client& client, const PrincipalId& target_v, Clock&& clock, Mailbox& mailbox, OnStep&& on_step) {
    auto first = client.begin(target_v, clock());
    on_step(true, first.msg);
    mailbox.send(first);
    while (client.outcome() == ClientOutcome::Pending) {
        auto reply = mailbox.receive();
        if (!reply) {
            client.fail(ClientFailure::Network);
            break;
        }
        on_step(false, *reply);
        auto r = client.handle(*reply, clock());
        for (auto& o : r.out) {
            on_step(true, o.msg);
            mailbox.send(o);
        }
        if (client.outcome() == ClientOutcome::Pending && r.out.empty()) {
            client.fail(ClientFailure::UnexpectedMessage);
        }
    }
    return client.outcome();
}

}  // namespace kerbtrip
