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

#include <json.hpp>

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "kerbtrip/principals.hpp"
#include "kerbtrip/scenario.hpp"

namespace kerbtrip {

// ---------------------------------------------------------------------------
// Attacker knowledge

/// Every sealed field a message carries.
inline std::vector<const SealedBox*> sealed_parts(const Message& m) {
    std::vector<const SealedBox*> out;
    std::visit(
        [&](const auto& x) {
            if constexpr (requires { x.ticket; }) out.push_back(&x.ticket.sealed);
            if constexpr (requires { x.authenticator; }) out.push_back(&x.authenticator.sealed);
            if constexpr (requires { x.enc; }) out.push_back(&x.enc);
        },
        m);
    return out;
}

/// Keys carried inside an opened sealed body; empty for bodies without keys
/// or plaintext that does not parse.
inline std::vector<SymmetricKey> keys_in_body(ByteView plain) {
    if (plain.empty()) return {};
    try {
        switch (plain[0]) {
            case body::ticket: return {body::decode<TicketBody>(plain).session_key};
            case body::as_reply: return {body::decode<AsReplyPart>(plain).session_key};
            case body::tgs_reply: return {body::decode<TgsReplyPart>(plain).session_key};
            case body::forwarded_passwords: {
                auto fp = body::decode<ForwardedPasswords>(plain);
                return {fp.k2, fp.k3};
            }
            case body::forwarded_k3: return {body::decode<ForwardedK3>(plain).k3};
            case body::challenge_response: return {body::decode<ChallengeResponseBody>(plain).k3};
            default: return {};
        }
    } catch (const CodecError&) {
        return {};
    }
}

/// Fixpoint of "open every sealed field of every frame with every known
/// key and learn the keys inside".
inline std::set<SymmetricKey> attacker_closure(std::set<SymmetricKey> knowledge, std::span<const Message> frames) {
    std::vector<const SealedBox*> boxes;
    for (const auto& f : frames)
        for (const auto* b : sealed_parts(f)) boxes.push_back(b);
    std::vector<bool> opened(boxes.size(), false);
    bool grew = true;
    while (grew) {
        grew = false;
        for (std::size_t i = 0; i < boxes.size(); ++i) {
            if (opened[i]) continue;
            for (const auto& k : knowledge) {
                Bytes plain;
                try {
                    plain = open(k, *boxes[i]);
                } catch (const AuthenticationFailure&) {
                    continue;
                }
                opened[i] = true;
                for (const auto& learned : keys_in_body(plain))
                    if (knowledge.insert(learned).second) grew = true;
                break;
            }
            if (grew) break;  // restart with the enlarged key set
        }
    }
    return knowledge;
}

// ---------------------------------------------------------------------------
// Trace and verdict

enum class EventKind { send, deliver, drop, replay, inject, timer_fire, grant, alert, notice, skip };

inline std::string_view to_string(EventKind k) {
    switch (k) {
        case EventKind::send: return "send";
        case EventKind::deliver: return "deliver";
        case EventKind::drop: return "drop";
        case EventKind::replay: return "replay";
        case EventKind::inject: return "inject";
        case EventKind::timer_fire: return "timer_fire";
        case EventKind::grant: return "grant";
        case EventKind::alert: return "alert";
        case EventKind::notice: return "notice";
        case EventKind::skip: return "skip";
    }
    return "?";
}

inline EventKind parse_event_kind(std::string_view s) {
    for (int k = 0; k <= static_cast<int>(EventKind::skip); ++k)
        if (to_string(static_cast<EventKind>(k)) == s) return static_cast<EventKind>(k);
    throw std::invalid_argument("unknown event kind '" + std::string(s) + "'");
}

struct SimEvent {
    Timestamp tick = 0;
    std::uint64_t seq = 0;
    EventKind kind = EventKind::send;
    std::optional<Bytes> frame;
    std::string src, dst;
    std::string meta;

    /// One trace record. Canonical records leave out frame bytes.
    nlohmann::ordered_json to_json(bool canonical) const {
        nlohmann::ordered_json j;
        j["tick"] = tick;
        j["seq"] = seq;
        j["kind"] = std::string(to_string(kind));
        j["src"] = src;
        j["dst"] = dst;
        if (frame) {
            try {
                j["msg"] = describe(decode(*frame));
            } catch (const CodecError& e) {
                j["msg"] = std::string("<undecodable: ") + to_string(e.kind()) + ">";
            }
        }
        j["meta"] = meta;
        if (frame && !canonical) j["frame"] = to_hex(*frame);
        return j;
    }

    static SimEvent from_json(const nlohmann::json& j) {
        SimEvent e;
        e.tick = j.at("tick").get<Timestamp>();
        e.seq = j.at("seq").get<std::uint64_t>();
        e.kind = parse_event_kind(j.at("kind").get<std::string>());
        e.src = j.at("src").get<std::string>();
        e.dst = j.at("dst").get<std::string>();
        e.meta = j.value("meta", "");
        if (j.contains("frame")) e.frame = from_hex(j["frame"].get<std::string>());
        return e;
    }
};

struct Trace {
    std::vector<SimEvent> events;

    std::string render(bool canonical) const {
        std::string out;
        for (const auto& e : events) {
            out += e.to_json(canonical).dump();
            out += '\n';
        }
        return out;
    }
    std::string canonical() const { return render(true); }
    std::string full() const { return render(false); }

    std::size_t count(EventKind k) const {
        return static_cast<std::size_t>(std::count_if(events.begin(), events.end(), [&](const auto& e) { return e.kind == k; }));
    }
};

struct GrantEntry {
    std::string node;  // who received the service reply
    PrincipalId client;
    PrincipalId server;
    Timestamp tick;
};

struct AlertEntry {
    Incident incident;
    NetworkAddress suspect_addr;
    PrincipalId client;
    Timestamp tick;
};

struct NoticeEntry {
    CompromiseNotice notice;
    Timestamp tick;
};

struct ClientReport {
    ClientOutcome outcome = ClientOutcome::Pending;
    ClientFailure failure = ClientFailure::None;
    std::optional<Timestamp> mutual_auth_value;
    std::optional<Timestamp> mutual_auth_expected;
};

struct Verdict {
    std::vector<GrantEntry> service_granted_to;
    std::vector<AlertEntry> alerts;
    std::vector<NoticeEntry> compromise_notices;
    bool attacker_succeeded = false;
    std::map<std::string, ClientReport> clients;
    std::size_t challenges_issued = 0;
    std::size_t alerts_relayed = 0;  // M10s that reached AS
    bool quiescent = true;

    /// Sorted, de-duplicated nodes that were granted service.
    std::vector<std::string> granted_nodes() const {
        std::set<std::string> s;
        for (const auto& g : service_granted_to) s.insert(g.node);
        return {s.begin(), s.end()};
    }

    std::string summary() const {
        std::ostringstream os;
        os << "attacker_succeeded=" << (attacker_succeeded ? "true" : "false") << " alerts=" << alerts.size()
           << " notices=" << compromise_notices.size() << " granted_to=";
        auto nodes = granted_nodes();
        for (std::size_t i = 0; i < nodes.size(); ++i) os << (i ? "," : "") << nodes[i];
        if (nodes.empty()) os << "-";
        return os.str();
    }
};

/// Mismatches between a scenario's [expect] block and a verdict.
inline std::vector<std::string> check_expectations(const Expectation& ex, const Verdict& v) {
    std::vector<std::string> bad;
    if (ex.attacker_succeeded && *ex.attacker_succeeded != v.attacker_succeeded)
        bad.push_back(std::string("attacker_succeeded: expected ") + (*ex.attacker_succeeded ? "true" : "false"));
    if (ex.alerts_count && *ex.alerts_count != v.alerts.size())
        bad.push_back("alerts_count: expected " + std::to_string(*ex.alerts_count) + ", got " +
                      std::to_string(v.alerts.size()));
    if (ex.granted_to) {
        auto want = *ex.granted_to;
        std::sort(want.begin(), want.end());
        want.erase(std::unique(want.begin(), want.end()), want.end());
        if (want != v.granted_nodes()) bad.push_back("granted_to: mismatch");
    }
    return bad;
}

// ---------------------------------------------------------------------------
// World

struct CapturedFrame {
    Message msg;
    Bytes bytes;
    std::string src_node;
    NetworkAddress src_addr;
    std::string dst_node;
};

struct SimResult {
    Trace trace;
    Verdict verdict;
};

/// Discrete-event network of principals plus one optional adversary. Single
/// threaded; all time is integer ticks.
class World {
public:
    World(const ScenarioSpec& spec, std::uint64_t seed) : spec_(spec), seed_(seed) {
        auto rng_for = [&](const std::string& label) { return RandomSource::seeded(derive_seed(seed, "rng:" + label)); };
        auto nonces_for = [&](const std::string& label) {
            return NonceSource::counter(derive_seed(seed, "nonce:" + label));
        };
        auto long_term = [&](const ServiceSpec& s) {
            if (s.key) return *s.key;
            auto r = rng_for("longterm:" + s.id.str());
            auto k = gen_session_key(r);
            k.origin = KeyOrigin::long_term;
            return k;
        };

        const auto& as_spec = *spec.as;
        const auto& tgs_spec = *spec.tgs;
        as_.emplace(as_spec.id, spec.variant, spec.timing, rng_for(as_spec.id.str()), nonces_for(as_spec.id.str()));
        add_node(as_spec.id.str(), as_spec.addr);
        auto k_tgs = long_term(tgs_spec);
        keys_["longterm:" + tgs_spec.id.str()] = k_tgs;
        tgs_.emplace(tgs_spec.id, k_tgs, as_spec.id, spec.variant, spec.timing, rng_for(tgs_spec.id.str()),
                     nonces_for(tgs_spec.id.str()));
        add_node(tgs_spec.id.str(), tgs_spec.addr);
        as_->add_tgs(tgs_spec.id, k_tgs);

        for (const auto& s : spec.servers) {
            auto k = long_term(s);
            keys_["longterm:" + s.id.str()] = k;
            tgs_->add_server(s.id, k);
            servers_.emplace(s.id.str(), ApplicationServer(s.id, k, tgs_spec.id, spec.variant, spec.timing,
                                                           rng_for(s.id.str()), nonces_for(s.id.str())));
            add_node(s.id.str(), s.addr);
        }
        for (const auto& c : spec.clients) {
            if (!servers_.contains(c.target.str()))
                throw ScenarioError("client " + c.id.str() + " targets unknown server " + c.target.str());
            try {
                as_->register_client(c.id, c.pw1, c.pw2, c.pw3);
            } catch (const Error& e) {
                throw ScenarioError(e.what());
            }
            for (int i = 1; i <= 3; ++i) {
                const auto& pw = i == 1 ? c.pw1 : i == 2 ? c.pw2 : c.pw3;
                keys_["password:" + c.id.str() + ":" + std::to_string(i)] = derive_key(pw, c.id, i);
            }
            auto cfg = Client::config_from_passwords(c.id, c.addr, as_spec.id, tgs_spec.id, c.pw1, c.pw2, c.pw3,
                                                     spec.variant, spec.timing);
            clients_.emplace(c.id.str(), Client(std::move(cfg), rng_for(c.id.str()), nonces_for(c.id.str())));
            add_node(c.id.str(), c.addr);
            schedule(c.start, ClientStart{c.id.str()});
        }
        if (spec.adversary) setup_adversary(*spec.adversary, rng_for("adversary"), nonces_for("adversary"));
    }

    // --- inspection --------------------------------------------------------

    const Trace& trace() const noexcept { return trace_; }
    const Verdict& verdict() const noexcept { return verdict_; }
    Timestamp now() const noexcept { return now_; }
    const AuthServer& as() const { return *as_; }
    const TicketGrantingServer& tgs() const { return *tgs_; }
    const ApplicationServer& server(const std::string& id) const { return servers_.at(id); }
    const Client& client(const std::string& id) const { return clients_.at(id); }
    const std::vector<CapturedFrame>& captured() const noexcept { return captured_; }
    /// password:<client>:<i> and longterm:<principal> keys in use.
    const std::map<std::string, SymmetricKey>& named_keys() const noexcept { return keys_; }
    const std::set<SymmetricKey>& attacker_knowledge() const noexcept { return known_; }
    std::optional<std::string> attacker_node() const {
        return spec_.adversary ? std::optional(spec_.adversary->node) : std::nullopt;
    }
    std::size_t queued() const noexcept { return queue_.size(); }

    bool quiescent() const {
        if (!queue_.empty()) return false;
        return std::none_of(servers_.begin(), servers_.end(),
                            [](const auto& s) { return !s.second.pending_challenges().empty(); });
    }

    // --- driving -----------------------------------------------------------

    /// Enqueues a frame as if `src_node` had put it on the wire now.
    void post(Bytes frame, const std::string& src_node, const NetworkAddress& src_addr, const std::string& dst_node,
              EventKind kind = EventKind::send) {
        transmit(std::move(frame), src_node, src_addr, dst_node, kind);
    }

    /// Processes the next event: a timer expiry if one is due first,
    /// otherwise the lowest (tick, seq) queue entry. False once quiescent or
    /// past max_ticks.
    bool step() {
        auto timer = next_timer();
        auto head = queue_.empty() ? std::nullopt : std::optional(queue_.begin()->first.first);
        if (!timer && !head) return false;
        auto next = timer && (!head || *timer <= *head) ? *timer : *head;
        if (next > spec_.max_ticks) {
            verdict_.quiescent = false;
            return false;
        }
        now_ = std::max(now_, next);
        if (timer && *timer == next) {
            fire_timers();
            return true;
        }
        auto node = queue_.extract(queue_.begin());
        std::visit([&](auto& item) { process(item); }, node.mapped());
        return true;
    }

    const Verdict& run() {
        while (step()) {
        }
        return verdict_;
    }

private:
    struct FrameDelivery {
        Bytes frame;
        std::string src_node;
        NetworkAddress src_addr;
        std::string dst_node;
    };
    struct ClientStart {
        std::string client;
    };
    struct ActionFire {
        std::size_t index;
    };
    using Pending = std::variant<FrameDelivery, ClientStart, ActionFire>;

    struct Interceptor {
        std::uint8_t type;
        bool drop;
        std::int64_t extra;
    };

    void add_node(const std::string& name, const NetworkAddress& addr) {
        if (!node_addr_.emplace(name, addr).second) throw ScenarioError("duplicate node name " + name);
    }

    void schedule(Timestamp at, Pending p) { queue_.emplace(std::pair(at, queue_seq_++), std::move(p)); }

    SimEvent& record(EventKind kind, std::string src, std::string dst, std::string meta = {},
                     std::optional<Bytes> frame = std::nullopt) {
        trace_.events.push_back({now_, trace_.events.size(), kind, std::move(frame), std::move(src), std::move(dst),
                                 std::move(meta)});
        return trace_.events.back();
    }

    std::int64_t latency(const std::string& src, const std::string& dst) const {
        auto it = spec_.link_latency.find({src, dst});
        return it != spec_.link_latency.end() ? it->second : spec_.latency;
    }

    bool is_attacker(const std::string& node) const { return spec_.adversary && spec_.adversary->node == node; }

    // --- adversary setup ---------------------------------------------------

    void setup_adversary(const AdversarySpec& adv, RandomSource rng, NonceSource nonces) {
        add_node(adv.node, adv.addr);
        adv_rng_.emplace(rng);
        adv_nonces_.emplace(nonces);
        for (const auto& name : adv.knowledge) {
            if (name.rfind("session-tgs:", 0) == 0) {
                leak_tgs_.insert(PrincipalId(name.substr(12)));
            } else if (name.rfind("session-v:", 0) == 0) {
                leak_v_.insert(PrincipalId(name.substr(10)));
            } else if (auto it = keys_.find(name); it != keys_.end()) {
                given_.insert(it->second);
            } else {
                throw ScenarioError("unknown knowledge name '" + name + "'");
            }
        }
        known_ = given_;
        const auto& caps = adv.caps;
        for (std::size_t i = 0; i < adv.actions.size(); ++i) {
            const auto& a = adv.actions[i];
            auto where = "action on line " + std::to_string(a.line) + ": ";
            auto require = [&](bool cap, const char* name) {
                if (!cap) throw ScenarioError(where + "needs the " + name + " capability");
            };
            switch (a.kind) {
                case ActionKind::replay:
                    require(caps.capture, "capture");
                    require(caps.replay, "replay");
                    break;
                case ActionKind::forge_tgs_request:
                case ActionKind::forge_service_request:
                    require(caps.capture, "capture");
                    require(caps.inject, "inject");
                    break;
                case ActionKind::drop: require(caps.drop, "drop"); break;
                case ActionKind::delay: require(caps.delay, "delay"); break;
            }
            if ((a.kind == ActionKind::replay || a.kind == ActionKind::forge_tgs_request ||
                 a.kind == ActionKind::forge_service_request) &&
                !node_addr_.contains(a.dst))
                throw ScenarioError(where + "unknown destination node " + a.dst);
            schedule(a.at, ActionFire{i});
        }
    }

    void learn(const SymmetricKey& k) {
        if (given_.insert(k).second) recompute_knowledge();
    }

    void recompute_knowledge() {
        std::vector<Message> msgs;
        msgs.reserve(captured_.size());
        for (const auto& f : captured_) msgs.push_back(f.msg);
        known_ = attacker_closure(given_, msgs);
    }

    void check_leaks() {
        if (!spec_.adversary) return;
        const auto& as_issued = as_->issued_sessions();
        for (; as_leaked_ < as_issued.size(); ++as_leaked_)
            if (leak_tgs_.contains(as_issued[as_leaked_].first)) learn(as_issued[as_leaked_].second);
        const auto& tgs_issued = tgs_->issued_sessions();
        for (; tgs_leaked_ < tgs_issued.size(); ++tgs_leaked_)
            if (leak_v_.contains(tgs_issued[tgs_leaked_].first)) learn(tgs_issued[tgs_leaked_].second);
    }

    template <typename Body>
    std::optional<Body> attacker_open(const SealedBox& box) const {
        for (const auto& k : known_) {
            try {
                return open_body<Body>(k, box);
            } catch (const Error&) {
            }
        }
        return std::nullopt;
    }

    std::optional<SymmetricKey> attacker_key_for(const SealedBox& box) const {
        for (const auto& k : known_) {
            try {
                open(k, box);
                return k;
            } catch (const AuthenticationFailure&) {
            }
        }
        return std::nullopt;
    }

    const CapturedFrame* find_captured(const FrameRef& ref) const {
        int seen = 0;
        for (const auto& f : captured_)
            if (type_byte(f.msg) == ref.type && ++seen == ref.occurrence) return &f;
        return nullptr;
    }

    // --- network -----------------------------------------------------------

    void transmit(Bytes frame, const std::string& src_node, const NetworkAddress& src_addr, const std::string& dst_node,
                  EventKind kind) {
        record(kind, src_node, dst_node, {}, frame);
        auto delay = latency(src_node, dst_node);
        if (kind == EventKind::send && !frame.empty()) {
            if (spec_.adversary && spec_.adversary->caps.capture) {
                try {
                    captured_.push_back({decode(frame), frame, src_node, src_addr, dst_node});
                    recompute_knowledge();
                } catch (const CodecError&) {
                }
            }
            for (auto it = interceptors_.begin(); it != interceptors_.end(); ++it) {
                if (frame.size() > 4 && frame[4] == it->type) {
                    if (it->drop) {
                        record(EventKind::drop, src_node, dst_node, "dropped by adversary", frame);
                        interceptors_.erase(it);
                        return;
                    }
                    delay += it->extra;
                    trace_.events.back().meta = "delayed by " + std::to_string(it->extra);
                    interceptors_.erase(it);
                    break;
                }
            }
        }
        schedule(now_ + delay, FrameDelivery{std::move(frame), src_node, src_addr, dst_node});
    }

    void send(const Message& m, const std::string& src_node, const std::string& dst_node,
              EventKind kind = EventKind::send, std::optional<NetworkAddress> src_addr = std::nullopt) {
        transmit(encode(m), src_node, src_addr.value_or(node_addr_.at(src_node)), dst_node, kind);
    }

    std::optional<Timestamp> next_timer() const {
        std::optional<Timestamp> t;
        for (const auto& [_, v] : servers_)
            if (auto d = v.next_deadline(); d && (!t || *d + 1 < *t)) t = *d + 1;
        return t;
    }

    void fire_timers() {
        for (auto& [name, v] : servers_) {
            auto r = v.tick(now_);
            for (const auto& o : r.out) {
                const auto& alert = std::get<M9>(o.msg).alert;
                record(EventKind::timer_fire, name, name, "challenge for " + alert.client.str() + " expired");
            }
            apply(name, name, r);
        }
    }

    /// Emits what a principal's reaction produced.
    void apply(const std::string& self, const std::string& reply_to, const Reaction& r) {
        if (r.grant) {
            verdict_.service_granted_to.push_back({reply_to, r.grant->client, r.grant->server, now_});
            if (is_attacker(reply_to)) verdict_.attacker_succeeded = true;
            record(EventKind::grant, self, reply_to, "client=" + r.grant->client.str());
        }
        for (const auto& n : r.notices) {
            verdict_.compromise_notices.push_back({n, now_});
            record(EventKind::notice, self, self,
                   "client=" + n.client.str() + " suspect=" + n.suspect_addr.str() + " incident=" +
                       std::string(to_string(n.incident)) + " suspicion=" + std::string(to_string(n.suspicion)) +
                       (n.unknown_client ? " unknown_client" : ""));
        }
        for (const auto& o : r.out) {
            auto dst = o.to ? o.to->str() : reply_to;
            if (std::holds_alternative<M6>(o.msg)) ++verdict_.challenges_issued;
            if (auto* m9 = std::get_if<M9>(&o.msg)) {
                verdict_.alerts.push_back({m9->alert.incident, m9->alert.suspect_addr, m9->alert.client, now_});
                record(EventKind::alert, self, dst,
                       "incident=" + std::string(to_string(m9->alert.incident)) + " client=" + m9->alert.client.str() +
                           " suspect=" + m9->alert.suspect_addr.str());
            }
            send(o.msg, self, dst);
        }
    }

    // --- event processing --------------------------------------------------

    void process(ClientStart& s) {
        auto& c = clients_.at(s.client);
        auto first = c.begin(spec_.clients.at(client_index(s.client)).target, now_);
        send(first.msg, s.client, first.to->str());
    }

    std::size_t client_index(const std::string& name) const {
        for (std::size_t i = 0; i < spec_.clients.size(); ++i)
            if (spec_.clients[i].id.str() == name) return i;
        throw ScenarioError("no client " + name);
    }

    void process(FrameDelivery& d) {
        // Frames from the adversary carry the address they claimed to come from.
        auto tag = is_attacker(d.src_node) ? "src_addr=" + d.src_addr.str() : std::string();
        auto drop = [&](const std::string& why) {
            record(EventKind::drop, d.src_node, d.dst_node, tag.empty() ? why : why + " " + tag, d.frame);
        };
        if (!node_addr_.contains(d.dst_node)) return drop("unknown node");
        std::optional<Message> msg;
        try {
            msg = decode(d.frame);
        } catch (const CodecError& e) {
            return drop(std::string("codec error: ") + to_string(e.kind()));
        }

        if (is_attacker(d.dst_node)) {
            record(EventKind::deliver, d.src_node, d.dst_node, tag, d.frame);
            attacker_receive(*msg, d);
            return;
        }
        if (auto c = clients_.find(d.dst_node); c != clients_.end()) {
            auto r = c->second.handle(*msg, now_);
            if (!r.accepted() && r.out.empty()) {
                drop("client rejected: " + std::string(to_string(c->second.failure())));
            } else {
                record(EventKind::deliver, d.src_node, d.dst_node, tag, d.frame);
            }
            update_client_report(c->first, c->second);
            for (const auto& o : r.out) send(o.msg, c->first, o.to->str());
            return;
        }

        Reaction r;
        if (d.dst_node == as_->id().str()) {
            r = as_->handle(*msg, d.src_addr, now_);
        } else if (d.dst_node == tgs_->id().str()) {
            r = tgs_->handle(*msg, d.src_addr, now_);
        } else {
            r = servers_.at(d.dst_node).handle(*msg, d.src_addr, now_);
        }
        if (r.denied) {
            drop(std::string(to_string(*r.denied)));
        } else {
            record(EventKind::deliver, d.src_node, d.dst_node, tag, d.frame);
        }
        if (d.dst_node == as_->id().str() && std::holds_alternative<M10>(*msg)) ++verdict_.alerts_relayed;
        apply(d.dst_node, d.src_node, r);
        check_leaks();
    }

    void update_client_report(const std::string& name, const Client& c) {
        verdict_.clients[name] = {c.outcome(), c.failure(), c.mutual_auth_value(), c.mutual_auth_expected()};
    }

    void skip(const std::string& why) { record(EventKind::skip, spec_.adversary->node, spec_.adversary->node, why); }

    NetworkAddress attacker_src(const NetworkAddress& impersonated) const {
        return spec_.adversary->caps.spoof_addr ? impersonated : spec_.adversary->addr;
    }

    void process(ActionFire& f) {
        const auto& adv = *spec_.adversary;
        const auto& a = adv.actions[f.index];
        switch (a.kind) {
            case ActionKind::drop:
            case ActionKind::delay:
                interceptors_.push_back({a.frame.type, a.kind == ActionKind::drop, a.extra_delay});
                return;
            case ActionKind::replay: {
                const auto* cf = find_captured(a.frame);
                if (!cf) return skip("replay: frame " + a.frame.str() + " not captured");
                transmit(cf->bytes, adv.node, attacker_src(cf->src_addr), a.dst, EventKind::replay);
                return;
            }
            case ActionKind::forge_tgs_request: return forge_tgs_request(a);
            case ActionKind::forge_service_request: {
                const auto* cf = find_captured(a.frame);
                if (!cf) return skip("forge: frame " + a.frame.str() + " not captured");
                return forge_service_request(cf->msg, node_addr_.at(cf->dst_node), a.dst);
            }
        }
    }

    /// New TGS request around a captured TGT, authenticated with whatever
    /// session key the attacker holds for it.
    void forge_tgs_request(const AdversaryAction& a) {
        const auto* cf = find_captured(a.frame);
        if (!cf) return skip("forge: frame " + a.frame.str() + " not captured");
        std::optional<TicketTgs> ticket;
        std::optional<SymmetricKey> key;
        std::optional<PrincipalId> client;
        std::optional<NetworkAddress> addr;
        bool baseline = false;
        std::visit(
            [&](const auto& m) {
                using T = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<T, M3> || std::is_same_v<T, B3>) {
                    baseline = std::is_same_v<T, B3>;
                    ticket = m.ticket;
                    key = attacker_key_for(m.authenticator.sealed);
                    if (key) {
                        auto ab = open_body<AuthenticatorBody>(*key, m.authenticator.sealed);
                        client = ab.client;
                        addr = ab.client_addr;
                    }
                } else if constexpr (std::is_same_v<T, M2_1> || std::is_same_v<T, B2>) {
                    baseline = std::is_same_v<T, B2>;
                    ticket = m.ticket;
                    client = m.client;
                    addr = node_addr_.at(cf->dst_node);
                    if (auto part = attacker_open<AsReplyPart>(m.enc)) key = part->session_key;
                }
            },
            cf->msg);
        if (!ticket) return skip("forge: " + a.frame.str() + " carries no TGT");
        if (!key) return skip("forge: no known key for the TGT in " + a.frame.str());
        impersonating_.insert_or_assign(client->str(), *addr);
        auto auth = make_authenticator(*key, *client, *addr, now_, *adv_nonces_);
        auto n2 = adv_rng_->next_u64();
        Message forged = baseline ? Message(B3{*ticket, *a.target_v, n2, auth}) : Message(M3{*ticket, *a.target_v, n2, auth});
        send(forged, spec_.adversary->node, a.dst, EventKind::inject, attacker_src(*addr));
    }

    /// Presents a service ticket from a TGS reply the attacker can open.
    void forge_service_request(const Message& reply, const NetworkAddress& client_addr, const std::string& dst) {
        std::visit(
            [&](const auto& m) {
                using T = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<T, M4_1> || std::is_same_v<T, B4>) {
                    auto part = attacker_open<TgsReplyPart>(m.enc);
                    if (!part) return skip(std::string("cannot open ") + std::string(type_name(T::type_byte)) +
                                           " session key envelope");
                    impersonating_.insert_or_assign(m.client.str(), client_addr);
                    auto auth = make_authenticator(part->session_key, m.client, client_addr, now_, *adv_nonces_);
                    auto target = dst.empty() ? part->target_v.str() : dst;
                    Message req = std::is_same_v<T, B4> ? Message(B5{m.ticket, auth}) : Message(M5{m.ticket, auth});
                    send(req, spec_.adversary->node, target, EventKind::inject, attacker_src(client_addr));
                } else {
                    skip("forge: frame carries no service ticket");
                }
            },
            reply);
    }

    void attacker_receive(const Message& msg, const FrameDelivery& d) {
        const auto& adv = *spec_.adversary;
        captured_.push_back({msg, d.frame, d.src_node, d.src_addr, d.dst_node});
        recompute_knowledge();
        if ((std::holds_alternative<M4_1>(msg) || std::holds_alternative<B4>(msg)) && adv.auto_continue) {
            if (!adv.caps.inject) return skip("inject disabled");
            const auto& client = std::holds_alternative<M4_1>(msg) ? std::get<M4_1>(msg).client : std::get<B4>(msg).client;
            auto it = impersonating_.find(client.str());
            auto addr = it != impersonating_.end() ? it->second : adv.addr;
            return forge_service_request(msg, addr, "");
        }
        if (const auto* m6 = std::get_if<M6>(&msg)) {
            if (adv.on_challenge == ChallengePolicy::silent) return;
            if (!adv.caps.inject) return skip("inject disabled");
            auto key = attacker_key_for(m6->enc);
            if (!key) return skip("cannot open M6");
            auto ch = open_body<ChallengeBody>(*key, m6->enc);
            SymmetricKey guess;
            guess.origin = KeyOrigin::password_derived;
            adv_rng_->fill(guess.bytes);
            auto it = impersonating_.find(ch.client.str());
            auto addr = it != impersonating_.end() ? it->second : adv.addr;
            M7 reply{ch.client, seal_body(*key, ChallengeResponseBody{guess, now_}, *adv_nonces_)};
            send(reply, adv.node, d.src_node, EventKind::inject, attacker_src(addr));
        }
    }

    ScenarioSpec spec_;
    std::uint64_t seed_;
    Timestamp now_ = 0;
    std::uint64_t queue_seq_ = 0;
    std::map<std::pair<Timestamp, std::uint64_t>, Pending> queue_;
    Trace trace_;
    Verdict verdict_;

    std::optional<AuthServer> as_;
    std::optional<TicketGrantingServer> tgs_;
    std::map<std::string, ApplicationServer> servers_;
    std::map<std::string, Client> clients_;
    std::map<std::string, NetworkAddress> node_addr_;
    std::map<std::string, SymmetricKey> keys_;

    std::optional<RandomSource> adv_rng_;
    std::optional<NonceSource> adv_nonces_;
    std::set<SymmetricKey> given_, known_;
    std::set<PrincipalId> leak_tgs_, leak_v_;
    std::size_t as_leaked_ = 0, tgs_leaked_ = 0;
    std::vector<CapturedFrame> captured_;
    std::map<std::string, NetworkAddress> impersonating_;
    std::vector<Interceptor> interceptors_;
};

inline SimResult run_scenario(const ScenarioSpec& spec, std::uint64_t seed) {
    World w(spec, seed);
    w.run();
    return {w.trace(), w.verdict()};
}

}  // namespace kerbtrip
