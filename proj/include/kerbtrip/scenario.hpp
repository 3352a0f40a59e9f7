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

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "kerbtrip/crypto.hpp"
#include "kerbtrip/messages.hpp"

namespace kerbtrip {

// Scenario files are line-oriented text:
//
//   name = attack1-triple
//   [variant]
//   mode = triple
//   [principals]
//   as      as
//   tgs     tgs
//   server  v
//   client  alice addr=10.0.0.1 passwords=red,green,blue target=v start=1
//   [timing]
//   timer_duration = 30
//   freshness_window = 120
//   latency = 1
//   link alice v = 3
//   [adversary]
//   node = mallory
//   addr = 10.0.0.66
//   knowledge = session-tgs:alice
//   capabilities = capture inject spoof_addr
//   on_challenge = silent
//   action = 20 forge-tgs-request M3 tgs v
//   [limits]
//   max_ticks = 1000
//   [expect]
//   attacker_succeeded = false
//   alerts_count = 0
//   granted_to = alice
//
// '#' starts a comment. Captured frames are named TYPE[:N], the N-th
// (1-based) frame of that type the adversary saw, e.g. M5 or M2.1:2.

class ScenarioError : public Error {
public:
    using Error::Error;
};

struct ClientSpec {
    PrincipalId id;
    NetworkAddress addr;
    std::string pw1, pw2, pw3;
    PrincipalId target;
    Timestamp start = 1;
};

struct ServiceSpec {
    PrincipalId id;
    NetworkAddress addr;
    std::optional<SymmetricKey> key;
};

struct FrameRef {
    std::uint8_t type = 0;
    int occurrence = 1;

    std::string str() const { return std::string(type_name(type)) + ":" + std::to_string(occurrence); }
};

enum class ActionKind { replay, forge_tgs_request, forge_service_request, drop, delay };

/// replay FRAME DST
/// forge-tgs-request FRAME DST TARGET_V
/// forge-service-request FRAME DST
/// drop TYPE
/// delay TYPE TICKS
struct AdversaryAction {
    Timestamp at = 0;
    ActionKind kind = ActionKind::replay;
    FrameRef frame;
    std::string dst;
    std::optional<PrincipalId> target_v;
    std::int64_t extra_delay = 0;
    int line = 0;
};

struct Capabilities {
    bool capture = false;
    bool replay = false;
    bool spoof_addr = false;
    bool inject = false;
    bool drop = false;
    bool delay = false;
};

enum class ChallengePolicy { silent, wrong_password };

struct AdversarySpec {
    std::string node = "mallory";
    NetworkAddress addr{"attacker"};
    std::vector<std::string> knowledge;
    Capabilities caps;
    ChallengePolicy on_challenge = ChallengePolicy::silent;
    bool auto_continue = true;  // present any service ticket it manages to open
    std::vector<AdversaryAction> actions;
};

struct Expectation {
    std::optional<bool> attacker_succeeded;
    std::optional<std::size_t> alerts_count;
    std::optional<std::vector<std::string>> granted_to;

    bool empty() const { return !attacker_succeeded && !alerts_count && !granted_to; }
};

struct ScenarioSpec {
    std::string name = "unnamed";
    Variant variant = Variant::triple;
    std::optional<ServiceSpec> as;
    std::optional<ServiceSpec> tgs;
    std::vector<ServiceSpec> servers;
    std::vector<ClientSpec> clients;
    std::optional<AdversarySpec> adversary;
    Timing timing;
    std::int64_t latency = 1;
    std::map<std::pair<std::string, std::string>, std::int64_t> link_latency;
    std::int64_t max_ticks = 1000;
    Expectation expect;
};

namespace detail {

inline std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_ws(std::string_view s) {
    std::vector<std::string> out;
    std::istringstream is{std::string(s)};
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        auto next = s.find(sep, pos);
        out.push_back(trim(s.substr(pos, next == std::string_view::npos ? next : next - pos)));
        if (next == std::string_view::npos) break;
        pos = next + 1;
    }
    return out;
}

inline std::uint8_t parse_type_name(std::string_view s) {
    for (int t = 1; t < 0x20; ++t)
        if (type_name(static_cast<std::uint8_t>(t)) == s) return static_cast<std::uint8_t>(t);
    throw std::invalid_argument("unknown message type '" + std::string(s) + "'");
}

inline std::int64_t parse_int(const std::string& s) {
    std::size_t used = 0;
    long long v = 0;
    try {
        v = std::stoll(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size()) throw std::invalid_argument("expected an integer, got '" + s + "'");
    return v;
}

inline bool parse_bool(const std::string& s) {
    if (s == "true" || s == "yes" || s == "1") return true;
    if (s == "false" || s == "no" || s == "0") return false;
    throw std::invalid_argument("expected true or false, got '" + s + "'");
}

inline FrameRef parse_frame_ref(const std::string& s) {
    auto colon = s.find(':');
    FrameRef ref;
    ref.type = parse_type_name(s.substr(0, colon));
    if (colon != std::string::npos) ref.occurrence = static_cast<int>(parse_int(s.substr(colon + 1)));
    if (ref.occurrence < 1) throw std::invalid_argument("frame occurrence starts at 1");
    return ref;
}

/// Splits `key=value` attribute tokens.
inline std::map<std::string, std::string> attributes(const std::vector<std::string>& toks, std::size_t from) {
    std::map<std::string, std::string> out;
    for (auto i = from; i < toks.size(); ++i) {
        auto eq = toks[i].find('=');
        if (eq == std::string::npos) throw std::invalid_argument("expected key=value, got '" + toks[i] + "'");
        out[toks[i].substr(0, eq)] = toks[i].substr(eq + 1);
    }
    return out;
}

inline ServiceSpec parse_service(const std::vector<std::string>& toks) {
    if (toks.size() < 2) throw std::invalid_argument("missing principal name");
    auto attrs = attributes(toks, 2);
    ServiceSpec s{PrincipalId(toks[1]), NetworkAddress(attrs.contains("addr") ? attrs["addr"] : toks[1]), std::nullopt};
    if (attrs.contains("key")) s.key = SymmetricKey::from_bytes(from_hex(attrs["key"]), KeyOrigin::long_term);
    for (const auto& [k, _] : attrs)
        if (k != "addr" && k != "key") throw std::invalid_argument("unknown attribute '" + k + "'");
    return s;
}

inline ClientSpec parse_client(const std::vector<std::string>& toks) {
    if (toks.size() < 2) throw std::invalid_argument("missing client name");
    auto attrs = attributes(toks, 2);
    for (const auto* req : {"addr", "passwords", "target"})
        if (!attrs.contains(req)) throw std::invalid_argument(std::string("client needs ") + req + "=");
    auto pws = split(attrs["passwords"], ',');
    if (pws.size() != 3) throw std::invalid_argument("client needs exactly three comma-separated passwords");
    ClientSpec c{PrincipalId(toks[1]), NetworkAddress(attrs["addr"]), pws[0], pws[1], pws[2],
                 PrincipalId(attrs["target"]), 1};
    if (attrs.contains("start")) c.start = parse_int(attrs["start"]);
    for (const auto& [k, _] : attrs)
        if (k != "addr" && k != "passwords" && k != "target" && k != "start")
            throw std::invalid_argument("unknown attribute '" + k + "'");
    return c;
}

inline AdversaryAction parse_action(const std::string& value) {
    auto toks = split_ws(value);
    auto need = [&](std::size_t n) {
        if (toks.size() != n) throw std::invalid_argument("action '" + value + "' has the wrong number of fields");
    };
    if (toks.size() < 2) throw std::invalid_argument("action needs a tick and a verb");
    AdversaryAction a;
    a.at = parse_int(toks[0]);
    const auto& verb = toks[1];
    if (verb == "replay") {
        need(4);
        a.kind = ActionKind::replay;
        a.frame = parse_frame_ref(toks[2]);
        a.dst = toks[3];
    } else if (verb == "forge-tgs-request") {
        need(5);
        a.kind = ActionKind::forge_tgs_request;
        a.frame = parse_frame_ref(toks[2]);
        a.dst = toks[3];
        a.target_v = PrincipalId(toks[4]);
    } else if (verb == "forge-service-request") {
        need(4);
        a.kind = ActionKind::forge_service_request;
        a.frame = parse_frame_ref(toks[2]);
        a.dst = toks[3];
    } else if (verb == "drop") {
        need(3);
        a.kind = ActionKind::drop;
        a.frame = FrameRef{parse_type_name(toks[2]), 1};
    } else if (verb == "delay") {
        need(4);
        a.kind = ActionKind::delay;
        a.frame = FrameRef{parse_type_name(toks[2]), 1};
        a.extra_delay = parse_int(toks[3]);
        if (a.extra_delay < 0) throw std::invalid_argument("delay must be non-negative");
    } else {
        throw std::invalid_argument("unknown action '" + verb + "'");
    }
    return a;
}

}  // namespace detail

inline ScenarioSpec parse_scenario(std::istream& is) {
    ScenarioSpec spec;
    std::string section;
    std::string raw;
    int lineno = 0;
    auto adversary = [&]() -> AdversarySpec& {
        if (!spec.adversary) spec.adversary.emplace();
        return *spec.adversary;
    };
    while (std::getline(is, raw)) {
        ++lineno;
        auto line = detail::trim(raw.substr(0, raw.find('#')));
        if (line.empty()) continue;
        try {
            if (line.front() == '[') {
                if (line.back() != ']') throw std::invalid_argument("unterminated section header");
                section = line.substr(1, line.size() - 2);
                static const char* known[] = {"variant", "principals", "timing", "adversary", "limits", "expect"};
                if (std::find(std::begin(known), std::end(known), section) == std::end(known))
                    throw std::invalid_argument("unknown section [" + section + "]");
                if (section == "adversary") adversary();
                continue;
            }
            if (section == "principals") {
                auto toks = detail::split_ws(line);
                const auto& kind = toks[0];
                if (kind == "as") {
                    spec.as = detail::parse_service(toks);
                } else if (kind == "tgs") {
                    spec.tgs = detail::parse_service(toks);
                } else if (kind == "server") {
                    spec.servers.push_back(detail::parse_service(toks));
                } else if (kind == "client") {
                    spec.clients.push_back(detail::parse_client(toks));
                } else {
                    throw std::invalid_argument("unknown principal kind '" + kind + "'");
                }
                continue;
            }
            if (section == "timing" && line.rfind("link ", 0) == 0) {
                auto eq = line.find('=');
                auto ends = detail::split_ws(line.substr(5, eq == std::string::npos ? eq : eq - 5));
                if (eq == std::string::npos || ends.size() != 2) throw std::invalid_argument("expected 'link SRC DST = N'");
                spec.link_latency[{ends[0], ends[1]}] = detail::parse_int(detail::trim(line.substr(eq + 1)));
                continue;
            }

            auto eq = line.find('=');
            if (eq == std::string::npos) throw std::invalid_argument("expected key = value");
            auto key = detail::trim(line.substr(0, eq));
            auto value = detail::trim(line.substr(eq + 1));

            if (section.empty() && key == "name") {
                spec.name = value;
            } else if (section == "variant" && key == "mode") {
                spec.variant = parse_variant(value);
            } else if (section == "timing") {
                auto n = detail::parse_int(value);
                if (key == "timer_duration") spec.timing.timer_duration = n;
                else if (key == "freshness_window") spec.timing.freshness_window = n;
                else if (key == "tgt_lifetime") spec.timing.tgt_lifetime = n;
                else if (key == "service_lifetime") spec.timing.service_lifetime = n;
                else if (key == "latency") spec.latency = n;
                else throw std::invalid_argument("unknown timing key '" + key + "'");
                if (n < 0 || (key != "latency" && n == 0)) throw std::invalid_argument(key + " must be positive");
            } else if (section == "limits" && key == "max_ticks") {
                spec.max_ticks = detail::parse_int(value);
            } else if (section == "adversary") {
                auto& adv = adversary();
                if (key == "node") {
                    adv.node = value;
                } else if (key == "addr") {
                    adv.addr = NetworkAddress(value);
                } else if (key == "knowledge") {
                    for (auto& k : detail::split_ws(value)) adv.knowledge.push_back(k);
                } else if (key == "capabilities") {
                    for (auto& c : detail::split_ws(value)) {
                        if (c == "capture") adv.caps.capture = true;
                        else if (c == "replay") adv.caps.replay = true;
                        else if (c == "spoof_addr") adv.caps.spoof_addr = true;
                        else if (c == "inject") adv.caps.inject = true;
                        else if (c == "drop") adv.caps.drop = true;
                        else if (c == "delay") adv.caps.delay = true;
                        else throw std::invalid_argument("unknown capability '" + c + "'");
                    }
                } else if (key == "on_challenge") {
                    if (value == "silent") adv.on_challenge = ChallengePolicy::silent;
                    else if (value == "wrong-password") adv.on_challenge = ChallengePolicy::wrong_password;
                    else throw std::invalid_argument("on_challenge is silent or wrong-password");
                } else if (key == "continue") {
                    adv.auto_continue = detail::parse_bool(value);
                } else if (key == "action") {
                    auto a = detail::parse_action(value);
                    a.line = lineno;
                    adv.actions.push_back(std::move(a));
                } else {
                    throw std::invalid_argument("unknown adversary key '" + key + "'");
                }
            } else if (section == "expect") {
                if (key == "attacker_succeeded") spec.expect.attacker_succeeded = detail::parse_bool(value);
                else if (key == "alerts_count") spec.expect.alerts_count = static_cast<std::size_t>(detail::parse_int(value));
                else if (key == "granted_to") {
                    std::vector<std::string> names;
                    for (auto& n : detail::split(value, ',')) if (!n.empty()) names.push_back(n);
                    spec.expect.granted_to = names;
                } else throw std::invalid_argument("unknown expectation '" + key + "'");
            } else {
                throw std::invalid_argument("unexpected key '" + key + "'" +
                                            (section.empty() ? std::string() : " in [" + section + "]"));
            }
        } catch (const std::invalid_argument& e) {
            throw ScenarioError("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (!spec.as) throw ScenarioError("scenario declares no 'as' principal");
    if (!spec.tgs) throw ScenarioError("scenario declares no 'tgs' principal");
    if (spec.servers.empty()) throw ScenarioError("scenario declares no 'server' principal");
    if (spec.clients.empty()) throw ScenarioError("scenario declares no 'client' principal");
    return spec;
}

inline ScenarioSpec parse_scenario_text(std::string_view text) {
    std::istringstream is{std::string(text)};
    return parse_scenario(is);
}

inline ScenarioSpec load_scenario(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ScenarioError("cannot read scenario file " + path);
    try {
        return parse_scenario(is);
    } catch (const ScenarioError& e) {
        throw ScenarioError(path + ": " + e.what());
    }
}

}  // namespace kerbtrip
