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

// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.

#include <functional>
#include <iostream>
#include <set>

#include "kerbtrip/netsim.hpp"
#include "kerbtrip/transport.hpp"
#include "support/generators.hpp"

namespace {

using namespace kerbtrip;
using namespace std::chrono_literals;

struct Outcome {
    bool ok = true;
    std::string detail;

    /// Records a failed check; the first failure becomes the detail.
    bool check(bool cond, const std::string& what) {
        if (!cond && ok) {
            ok = false;
            detail = what;
        }
        return cond;
    }
};

ScenarioSpec bundled(const std::string& name) {
    return load_scenario(std::string(KERBTRIP_SCENARIO_DIR) + "/" + name + ".scn");
}

template <typename T>
std::optional<T> first_sent(const Trace& t, const std::string& src = {}) {
    for (const auto& e : t.events) {
        if (e.kind != EventKind::send || !e.frame || e.frame->at(4) != T::type_byte) continue;
        if (!src.empty() && e.src != src) continue;
        return std::get<T>(decode(*e.frame));
    }
    return std::nullopt;
}

std::size_t delivered(const Trace& t, std::uint8_t type, const std::string& src, const std::string& dst) {
    std::size_t n = 0;
    for (const auto& e : t.events)
        if (e.kind == EventKind::deliver && e.frame && e.frame->at(4) == type && e.src == src && e.dst == dst) ++n;
    return n;
}

// 1 ---------------------------------------------------------------------------
Outcome honest_path() {
    Outcome o;
    {
        World w(bundled("honest-triple"), 1);
        w.run();
        const auto& v = w.verdict();
        const auto& c = v.clients.at("alice");
        o.check(c.outcome == ClientOutcome::MutualAuthOk, "triple client outcome is not MutualAuthOk");
        o.check(v.service_granted_to.size() == 1 && v.service_granted_to[0].node == "alice", "triple V grant missing");
        auto kcv = w.tgs().issued_sessions().at(0).second;
        auto m7 = first_sent<M7>(w.trace());
        auto m8 = first_sent<M8>(w.trace());
        if (o.check(m7 && m8, "M7/M8 not on the wire")) {
            auto t5 = open_body<ChallengeResponseBody>(kcv, m7->enc).t5;
            auto value = open_body<MutualAuthBody>(kcv, m8->enc).value;
            o.check(value == t5 + 1, "M8 carries " + std::to_string(value) + ", T5 was " + std::to_string(t5));
            o.detail = "M8 = T5 + 1 = " + std::to_string(value);
        }
    }
    {
        World w(bundled("honest-baseline"), 1);
        w.run();
        const auto& v = w.verdict();
        o.check(v.clients.at("alice").outcome == ClientOutcome::MutualAuthOk, "baseline client outcome");
        o.check(v.granted_nodes() == std::vector<std::string>{"alice"}, "baseline grant missing");
        auto kcv = w.tgs().issued_sessions().at(0).second;
        auto b5 = first_sent<B5>(w.trace());
        auto b6 = first_sent<B6>(w.trace());
        if (o.check(b5 && b6, "B5/B6 not on the wire")) {
            auto ts = open_body<AuthenticatorBody>(kcv, b5->authenticator.sealed).created_at;
            o.check(open_body<MutualAuthBody>(kcv, b6->enc).value == ts + 1, "B6 is not timestamp + 1");
        }
    }
    if (o.ok) o.detail += "; baseline grants";
    return o;
}

// 2 ---------------------------------------------------------------------------
Outcome attack1() {
    Outcome o;
    auto base = run_scenario(bundled("attack1-baseline"), 1);
    o.check(base.verdict.attacker_succeeded, "baseline: attacker was not granted");
    World w(bundled("attack1-triple"), 1);
    w.run();
    const auto& v = w.verdict();
    o.check(!v.attacker_succeeded, "triple: attacker_succeeded");
    for (const auto& g : v.service_granted_to) o.check(g.node != "mallory", "triple: a grant names the attacker");
    for (const auto& [client, k] : w.tgs().issued_sessions())
        o.check(!w.attacker_knowledge().contains(k), "triple: closure acquired a K_c,v");
    o.check(v.alerts.empty(), "triple: unexpected alert");
    if (o.ok) o.detail = "baseline attacker granted; triple attacker denied, K_c,v never learned, 0 alerts";
    return o;
}

// 3 ---------------------------------------------------------------------------
Outcome attack2() {
    Outcome o;
    for (auto [name, incident] : {std::pair{"attack2-triple-silent", Incident::timeout},
                                  std::pair{"attack2-triple-wrongpw", Incident::bad_password}}) {
        std::string n = name;
        World w(bundled(n), 1);
        w.run();
        const auto& v = w.verdict();
        const auto& t = w.trace();
        o.check(delivered(t, M5::type_byte, "mallory", "v") == 1, n + ": attacker's M5 did not reach V");
        o.check(v.alerts.size() == 1, n + ": expected exactly one alert, got " + std::to_string(v.alerts.size()));
        if (!v.alerts.empty())
            o.check(v.alerts[0].incident == incident, n + ": wrong incident " + std::string(to_string(v.alerts[0].incident)));
        o.check(delivered(t, M9::type_byte, "v", "tgs") == 1, n + ": M9 V->TGS missing");
        o.check(delivered(t, M10::type_byte, "tgs", "as") == 1, n + ": M10 TGS->AS missing");
        o.check(v.compromise_notices.size() == 1 && v.compromise_notices[0].notice.incident == incident,
                n + ": AS recorded no CompromiseNotice");
        o.check(w.as().alerts_received().size() == 1, n + ": AS alert count");
        o.check(!v.attacker_succeeded, n + ": attacker_succeeded");
    }
    if (o.ok) o.detail = "silent -> 1 timeout, wrong-password -> 1 bad_password, both V->TGS->AS, attacker denied";
    return o;
}

// 4 ---------------------------------------------------------------------------
Outcome defense_isolation() {
    Outcome o;
    int k2_opens = 0, k_c_tgs_opens = 0;
    auto pw_rng = RandomSource::seeded(2024);
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        auto spec = bundled("honest-triple");
        auto& c = spec.clients.at(0);
        c.pw2 = "pw2-" + std::to_string(pw_rng.next_u64());
        World w(spec, seed);
        w.run();
        auto m41 = first_sent<M4_1>(w.trace());
        if (!o.check(m41.has_value(), "no M4.1 in run " + std::to_string(seed))) break;
        auto k_c_tgs = w.as().issued_sessions().at(0).second;
        auto k2 = derive_key(c.pw2, c.id, 2);
        try {
            open_body<TgsReplyPart>(k_c_tgs, m41->enc);
            ++k_c_tgs_opens;
        } catch (const AuthenticationFailure&) {
        }
        try {
            open_body<TgsReplyPart>(k2, m41->enc);
            ++k2_opens;
        } catch (const AuthenticationFailure&) {
        }
    }
    o.check(k_c_tgs_opens == 0, "K_c,tgs opened M4.1 " + std::to_string(k_c_tgs_opens) + " times");
    o.check(k2_opens == 100, "k2 opened M4.1 only " + std::to_string(k2_opens) + " times");
    if (o.ok) o.detail = "K_c,tgs 0/100, k2 100/100";
    return o;
}

// 5 ---------------------------------------------------------------------------
Outcome crypto_codec() {
    Outcome o;
    auto rng = RandomSource::seeded(5);
    auto nonces = NonceSource::counter(5);
    for (int i = 0; i < 200; ++i) {
        auto k = gen_session_key(rng);
        auto other = gen_session_key(rng);
        Bytes plain(static_cast<std::size_t>(rng.next_u64() % 4096));
        rng.fill(plain);
        auto box = seal(k, plain, nonces);
        o.check(open(k, box) == plain, "seal/open roundtrip");
        try {
            open(other, box);
            o.check(false, "wrong key accepted");
        } catch (const AuthenticationFailure&) {
        }
    }
    auto k = gen_session_key(rng);
    Bytes plain(64 - 40);
    rng.fill(plain);
    auto wire = seal(k, plain, nonces).serialize();
    o.check(wire.size() == 64, "tamper box is not 64 bytes");
    std::size_t rejected = 0;
    for (std::size_t byte = 0; byte < wire.size(); ++byte) {
        for (int bit = 0; bit < 8; ++bit) {
            auto t = wire;
            t[byte] ^= static_cast<std::uint8_t>(1u << bit);
            try {
                open(k, SealedBox::parse(t));
            } catch (const AuthenticationFailure&) {
                ++rejected;
            }
        }
    }
    o.check(rejected == wire.size() * 8, "tampered box accepted");

    testing::MessageGen gen(17);
    std::set<std::uint8_t> seen;
    const int n = 1200;
    for (int i = 0; i < n; ++i) {
        auto m = gen.message(static_cast<std::size_t>(i) % gen.variants());
        auto bytes = encode(m);
        auto back = decode(bytes);
        o.check(encode(back) == bytes && describe(back) == describe(m), "codec roundtrip of " + describe(m));
        seen.insert(type_byte(m));
    }
    o.check(seen.size() == gen.variants(), "not every variant exercised");
    if (o.ok)
        o.detail = "200 seal/open + wrong key, " + std::to_string(rejected) + "/512 bit flips rejected, " +
                   std::to_string(n) + " messages over " + std::to_string(seen.size()) + " variants";
    return o;
}

// 6 ---------------------------------------------------------------------------
std::map<std::string, std::vector<std::string>> daemon_sequence(const ScenarioSpec& spec, const World& world,
                                                                std::uint64_t seed) {
    const auto& keys = world.named_keys();
    const PrincipalId alice("alice"), v("v"), tgs("tgs");
    RealmKeytabs tabs;
    for (int i = 1; i <= 3; ++i) tabs.as.add({alice, i, keys.at("password:alice:" + std::to_string(i))});
    tabs.as.add({tgs, 0, keys.at("longterm:tgs")});
    tabs.tgs.add({tgs, 0, keys.at("longterm:tgs")});
    tabs.tgs.add({v, 0, keys.at("longterm:v")});
    tabs.servers[v].add({v, 0, keys.at("longterm:v")});

    auto clock = [] { return Timestamp{1}; };
    std::map<std::string, net::Endpoint> peers;
    for (const char* r : {"as", "tgs", "v"}) peers[r] = {"127.0.0.1", net::Listener::bind({"127.0.0.1", 0}).port()};
    std::vector<std::unique_ptr<net::Daemon>> daemons;
    for (auto [role, kt] : {std::pair{net::Role::as, &tabs.as}, std::pair{net::Role::tgs, &tabs.tgs},
                            std::pair{net::Role::v, &tabs.servers[v]}}) {
        net::DaemonConfig cfg;
        cfg.role = role;
        cfg.listen = peers.at(std::string(net::to_string(role)));
        cfg.keytab = *kt;
        cfg.peers = peers;
        cfg.variant = spec.variant;
        cfg.timing = spec.timing;
        cfg.seed = seed;
        cfg.clock = clock;
        daemons.push_back(std::make_unique<net::Daemon>(cfg));
        daemons.back()->start();
    }
    const auto& c = spec.clients.at(0);
    net::ClientAuthConfig cfg{Client::config_from_passwords(alice, c.addr, PrincipalId("as"), tgs, c.pw1, c.pw2, c.pw3,
                                                            spec.variant, spec.timing),
                              peers, 3000ms, seed, clock};
    auto r = net::client_auth(cfg, v);
    std::map<std::string, std::vector<std::string>> seq;
    if (r.exit_code() != 0) return seq;
    daemons[2]->wait_for(
        [](const net::DaemonEvent& e) {
            return e.kind == "send" && (std::holds_alternative<M8>(*e.msg) || std::holds_alternative<B6>(*e.msg));
        },
        3000ms);
    for (const auto& s : r.steps)
        if (s.outgoing) seq["alice"].push_back(describe(s.msg));
    for (const auto& d : daemons)
        for (const auto& e : d->events())
            if (e.kind == "send") seq[d->config().principal().str()].push_back(describe(*e.msg));
    return seq;
}

Outcome determinism() {
    Outcome o;
    const char* files[] = {"honest-baseline", "attack1-baseline", "attack2-baseline",
                           "honest-triple",   "attack1-triple",   "attack2-triple-silent",
                           "attack2-triple-wrongpw"};
    for (const char* f : files) {
        auto a = run_scenario(bundled(f), 1).trace.canonical();
        auto b = run_scenario(bundled(f), 1).trace.canonical();
        o.check(!a.empty() && a == b, std::string(f) + ": canonical traces differ");
    }
    std::size_t compared = 0;
    for (const char* f : {"honest-triple", "honest-baseline"}) {
        auto spec = bundled(f);
        spec.latency = 0;
        spec.clients.at(0).addr = NetworkAddress("127.0.0.1");
        World w(spec, 7);
        w.run();
        std::map<std::string, std::vector<std::string>> sim;
        for (const auto& e : w.trace().events)
            if (e.kind == EventKind::send) sim[e.src].push_back(describe(decode(*e.frame)));
        auto live = daemon_sequence(spec, w, 7);
        o.check(sim == live, std::string(f) + ": daemon messages differ from the simulator");
        for (const auto& [_, s] : sim) compared += s.size();
    }
    if (o.ok) o.detail = "7 scenarios x2 identical; " + std::to_string(compared) + " daemon messages match the simulator";
    return o;
}

// 7 ---------------------------------------------------------------------------
Outcome timer_boundary() {
    Outcome o;
    // Honest M5 reaches V at tick 6, so the deadline is 36; M7 normally lands at 8.
    auto run = [](std::int64_t extra) {
        auto spec = bundled("honest-triple");
        spec.adversary.emplace();
        spec.adversary->caps.delay = true;
        spec.adversary->actions.push_back({0, ActionKind::delay, FrameRef{M7::type_byte, 1}, "", std::nullopt, extra, 0});
        World w(spec, 1);
        w.run();
        return std::pair(w.verdict(), w.trace());
    };
    auto [on_time, t1] = run(28);
    auto [late, t2] = run(29);
    auto m7_tick = [](const Trace& t) {
        for (const auto& e : t.events)
            if (e.kind != EventKind::send && e.frame && e.frame->at(4) == M7::type_byte) return e.tick;
        return Timestamp{-1};
    };
    auto deadline = 6 + 30;
    o.check(m7_tick(t1) == deadline, "M7 not handled at the deadline");
    o.check(on_time.service_granted_to.size() == 1 && on_time.alerts.empty(), "M7 at deadline was not granted");
    o.check(m7_tick(t2) == deadline + 1, "late M7 not handled at deadline + 1");
    o.check(late.service_granted_to.empty(), "M7 at deadline + 1 was granted");
    o.check(late.alerts.size() == 1 && late.alerts[0].incident == Incident::timeout, "no timeout alert at deadline + 1");
    if (o.ok) o.detail = "M7 at 36 -> grant; at 37 -> timeout alert";
    return o;
}

// 8 ---------------------------------------------------------------------------
Outcome alert_accounting() {
    Outcome o;
    std::size_t challenges = 0, runs = 0;
    for (const auto& entry : std::filesystem::directory_iterator(KERBTRIP_SCENARIO_DIR)) {
        if (entry.path().extension() != ".scn") continue;
        auto spec = load_scenario(entry.path().string());
        for (std::uint64_t seed : {1u, 2u, 3u}) {
            World w(spec, seed);
            w.run();
            ++runs;
            const auto& t = w.trace();
            const auto& v = w.verdict();
            auto name = spec.name + " seed " + std::to_string(seed);
            o.check(w.quiescent(), name + ": not quiescent");
            o.check(t.count(EventKind::deliver) + t.count(EventKind::drop) ==
                        t.count(EventKind::send) + t.count(EventKind::replay) + t.count(EventKind::inject),
                    name + ": conservation violated");
            std::size_t challenge_grants = 0;
            if (spec.variant == Variant::triple) challenge_grants = v.service_granted_to.size();
            o.check(v.challenges_issued == challenge_grants + v.alerts.size(), name + ": a challenge resolved twice or never");
            challenges += v.challenges_issued;
        }
    }
    if (o.ok)
        o.detail = std::to_string(runs) + " runs, " + std::to_string(challenges) +
                   " challenges each resolved once, conservation holds";
    return o;
}

}  // namespace

int main() {
    spdlog::set_level(spdlog::level::off);
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"honest-path completeness", honest_path},
        {"attack1 matrix cell", attack1},
        {"attack2 matrix cell", attack2},
        {"defense mechanism isolation", defense_isolation},
        {"crypto/codec property suites", crypto_codec},
        {"determinism", determinism},
        {"timer boundary", timer_boundary},
        {"alert accounting", alert_accounting},
    };
    int failed = 0;
    int n = 0;
    for (const auto& [name, fn] : criteria) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += o.ok ? 0 : 1;
        std::cout << (o.ok ? "PASS" : "FAIL") << "  " << ++n << ". " << name << ": " << o.detail << std::endl;
    }
    std::cout << (failed ? std::to_string(failed) + " criteria failed" : "all criteria passed") << std::endl;
    return failed ? 1 : 0;
}
