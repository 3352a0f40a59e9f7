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

// kerbtrip: simulator runs, attack matrix, trace decoding, keytabs, daemons
// and the client workflow.
//
// Exit codes: 0 ok, 1 error, 2 expectation mismatch, 3 protocol failure.

#include <CLI11.hpp>
#include <spdlog/fmt/chrono.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "kerbtrip/netsim.hpp"
#include "kerbtrip/transport.hpp"

namespace {

using namespace kerbtrip;
namespace fs = std::filesystem;

constexpr int exit_ok = 0;
constexpr int exit_error = 1;
constexpr int exit_mismatch = 2;

void setup_logging(spdlog::level::level_enum fallback) {
    auto logger = spdlog::stderr_color_mt("kerbtrip");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("%Y-%m-%dT%H:%M:%S.%e %^%l%$ %v");
    auto level = fallback;
    if (const char* env = std::getenv("KERBTRIP_LOG"); env && *env) level = spdlog::level::from_str(env);
    spdlog::set_level(level);
}

struct Overrides {
    std::string variant;
    std::int64_t timer = 0;
    std::int64_t freshness = 0;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--variant", variant, "baseline or triple")->check(CLI::IsMember({"baseline", "triple"}));
        cmd->add_option("--timer", timer, "challenge timer in ticks or seconds")->check(CLI::PositiveNumber);
        cmd->add_option("--freshness", freshness, "authenticator freshness window")->check(CLI::PositiveNumber);
    }

    void apply(Variant& v, Timing& t) const {
        if (!variant.empty()) v = parse_variant(variant);
        if (timer > 0) t.timer_duration = timer;
        if (freshness > 0) t.freshness_window = freshness;
    }
};

void write_file(const std::string& path, const std::string& data) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path);
    os << data;
    if (!os) throw Error("write failed for " + path);
}

std::map<std::string, net::Endpoint> parse_peers(const std::vector<std::string>& specs) {
    std::map<std::string, net::Endpoint> peers;
    for (const auto& s : specs) {
        auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) throw std::invalid_argument("--peer expects NAME=HOST:PORT, got '" + s + "'");
        peers[s.substr(0, eq)] = net::Endpoint::parse(s.substr(eq + 1));
    }
    return peers;
}

// --- sim-run -----------------------------------------------------------------

struct SimRunArgs {
    std::string scenario;
    std::uint64_t seed = 1;
    std::string trace_out;
    bool canonical = false;
    Overrides over;
};

int sim_run(const SimRunArgs& a) {
    auto spec = load_scenario(a.scenario);
    a.over.apply(spec.variant, spec.timing);
    auto r = run_scenario(spec, a.seed);
    if (!a.trace_out.empty()) write_file(a.trace_out, r.trace.render(a.canonical));
    std::cout << spec.name << ": " << r.verdict.summary() << "\n";
    if (!r.verdict.quiescent) std::cout << "note: stopped at max_ticks=" << spec.max_ticks << "\n";
    auto bad = check_expectations(spec.expect, r.verdict);
    for (const auto& b : bad) std::cout << "mismatch: " << b << "\n";
    return bad.empty() ? exit_ok : exit_mismatch;
}

// --- sim-matrix --------------------------------------------------------------

struct MatrixArgs {
    std::uint64_t seed = 1;
    std::string out;
    std::string scenario_dir = KERBTRIP_SCENARIO_DIR;
    std::string trace_dir;
};

struct Cell {
    std::string variant, scenario;
    std::vector<std::string> files;
};

int sim_matrix(const MatrixArgs& a) {
    const std::vector<Cell> cells = {
        {"baseline", "honest", {"honest-baseline"}},
        {"baseline", "attack1", {"attack1-baseline"}},
        {"baseline", "attack2", {"attack2-baseline"}},
        {"triple", "honest", {"honest-triple"}},
        {"triple", "attack1", {"attack1-triple"}},
        {"triple", "attack2", {"attack2-triple-silent", "attack2-triple-wrongpw"}},
    };
    std::ostringstream table;
    table << fmt::format("{:<9} {:<8} {:<15} {:<24} {:<8} {:<9} {}\n", "variant", "scenario", "granted_to", "alerts",
                         "notices", "attacker", "check");
    bool all_ok = true;
    for (const auto& cell : cells) {
        std::set<std::string> granted;
        std::vector<std::string> alerts;
        std::size_t notices = 0;
        bool attacker = false;
        std::vector<std::string> client_names;
        for (const auto& f : cell.files) {
            auto spec = load_scenario(a.scenario_dir + "/" + f + ".scn");
            auto r = run_scenario(spec, a.seed);
            if (!a.trace_dir.empty()) write_file(a.trace_dir + "/" + f + ".jsonl", r.trace.canonical());
            for (const auto& n : r.verdict.granted_nodes()) granted.insert(n);
            for (const auto& al : r.verdict.alerts) alerts.emplace_back(to_string(al.incident));
            notices += r.verdict.compromise_notices.size();
            attacker |= r.verdict.attacker_succeeded;
            for (const auto& c : spec.clients) client_names.push_back(c.id.str());
        }
        bool client_granted = std::all_of(client_names.begin(), client_names.end(),
                                          [&](const auto& c) { return granted.contains(c); });
        bool ok = false;
        if (cell.scenario == "honest") {
            ok = client_granted && !attacker && alerts.empty();
        } else if (cell.variant == "baseline") {
            ok = attacker;
        } else if (cell.scenario == "attack1") {
            ok = !attacker && alerts.empty();
        } else {
            ok = !attacker && !alerts.empty() && notices == alerts.size();
        }
        all_ok &= ok;
        std::string granted_s, alerts_s;
        for (const auto& g : granted) granted_s += (granted_s.empty() ? "" : ",") + g;
        for (const auto& al : alerts) alerts_s += (alerts_s.empty() ? "" : ",") + al;
        table << fmt::format("{:<9} {:<8} {:<15} {:<24} {:<8} {:<9} {}\n", cell.variant, cell.scenario,
                             granted_s.empty() ? "-" : granted_s, alerts_s.empty() ? "-" : alerts_s, notices,
                             attacker ? "granted" : "denied", ok ? "ok" : "DEVIATES");
    }
    std::cout << table.str();
    if (!a.out.empty()) write_file(a.out, table.str());
    return all_ok ? exit_ok : exit_mismatch;
}

// --- trace-dump --------------------------------------------------------------

int trace_dump(const std::string& path, bool canonical) {
    std::ifstream is(path);
    if (!is) throw Error("cannot read trace file " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        SimEvent e;
        try {
            e = SimEvent::from_json(nlohmann::json::parse(line));
        } catch (const std::exception& ex) {
            throw Error(path + ": line " + std::to_string(lineno) + ": " + ex.what());
        }
        if (canonical) {
            std::cout << e.to_json(true).dump() << "\n";
            continue;
        }
        std::cout << fmt::format("{:>5} {:>4} {:<10} {}>{}", e.tick, e.seq, to_string(e.kind), e.src, e.dst);
        if (e.frame) {
            try {
                std::cout << " " << describe(decode(*e.frame));
            } catch (const CodecError& ce) {
                std::cout << " <undecodable: " << to_string(ce.kind()) << ">";
            }
        }
        if (!e.meta.empty()) std::cout << " [" << e.meta << "]";
        std::cout << "\n";
    }
    return exit_ok;
}

// --- keytab-gen --------------------------------------------------------------

struct KeytabArgs {
    std::string out_dir = ".";
    std::vector<std::string> clients;
    std::string tgs = "tgs";
    std::vector<std::string> servers{"v"};
    std::optional<std::uint64_t> seed;
};

int keytab_gen(const KeytabArgs& a) {
    std::vector<ClientPasswords> clients;
    for (const auto& c : a.clients) {
        auto colon = c.find(':');
        auto pws = colon == std::string::npos ? std::vector<std::string>{} : detail::split(c.substr(colon + 1), ',');
        if (colon == std::string::npos || pws.size() != 3)
            throw std::invalid_argument("--client expects NAME:PW1,PW2,PW3, got '" + c + "'");
        clients.push_back({PrincipalId(c.substr(0, colon)), pws[0], pws[1], pws[2]});
    }
    std::vector<PrincipalId> servers;
    for (const auto& s : a.servers) servers.emplace_back(s);
    auto rng = a.seed ? RandomSource::seeded(*a.seed) : RandomSource::system();
    auto tabs = make_realm_keytabs(clients, PrincipalId(a.tgs), servers, rng);
    fs::create_directories(a.out_dir);
    auto save = [&](const std::string& name, const Keytab& kt) {
        auto path = (fs::path(a.out_dir) / (name + ".keytab")).string();
        kt.save(path);
        fs::permissions(path, fs::perms::owner_read | fs::perms::owner_write, fs::perm_options::replace);
        std::cout << "wrote " << path << " (" << kt.entries().size() << " keys)\n";
    };
    save("as", tabs.as);
    save(a.tgs, tabs.tgs);
    for (const auto& [v, kt] : tabs.servers) save(v.str(), kt);
    return exit_ok;
}

// --- serve -------------------------------------------------------------------

struct ServeArgs {
    std::string role;
    std::string listen;
    std::string keytab;
    std::vector<std::string> peers;
    std::string id;
    Overrides over;
};

int serve(const ServeArgs& a) {
    net::DaemonConfig cfg;
    cfg.role = net::parse_role(a.role);
    cfg.listen = net::Endpoint::parse(a.listen);
    cfg.keytab_path = a.keytab;
    cfg.peers = parse_peers(a.peers);
    if (!a.id.empty()) cfg.id = PrincipalId(a.id);
    a.over.apply(cfg.variant, cfg.timing);

    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);  // inherited by daemon threads

    net::Daemon d(cfg);
    d.start();
    int sig = 0;
    sigwait(&set, &sig);
    spdlog::info("signal {} received, shutting down", sig);
    d.stop();
    return exit_ok;
}

// --- client-auth -------------------------------------------------------------

struct ClientArgs {
    std::string client;
    std::string passwords;
    std::string addr = "127.0.0.1";
    std::string target = "v";
    std::vector<std::string> peers;
    Overrides over;
};

int client_auth_cmd(const ClientArgs& a) {
    auto pw = a.passwords;
    if (pw.empty())
        if (const char* env = std::getenv("KERBTRIP_PASSWORDS")) pw = env;
    auto pws = detail::split(pw, ',');
    if (pws.size() != 3) throw std::invalid_argument("need three passwords (--passwords or KERBTRIP_PASSWORDS)");
    Variant variant = Variant::triple;
    Timing timing;
    a.over.apply(variant, timing);
    net::ClientAuthConfig cfg{Client::config_from_passwords(PrincipalId(a.client), NetworkAddress(a.addr),
                                                            PrincipalId("as"), PrincipalId("tgs"), pws[0], pws[1],
                                                            pws[2], variant, timing),
                              parse_peers(a.peers), std::chrono::milliseconds(5000), std::nullopt, {}};
    auto wall = [] {
        auto now = std::chrono::system_clock::now();
        auto t = std::chrono::system_clock::to_time_t(now);
        auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
        return fmt::format("{:%H:%M:%S}.{:03}", fmt::localtime(t), ms);
    };
    std::size_t n = 0;
    auto r = net::client_auth(cfg, PrincipalId(a.target),
                              [&](const net::ClientStep& s) { std::cout << s.line(++n) << " wall=" << wall() << "\n"; });
    switch (r.exit_code()) {
        case 0: std::cout << "mutual authentication ok\n"; break;
        case 1: std::cerr << "network error: " << r.error << "\n"; break;
        default: std::cerr << "protocol failure: " << to_string(r.failure) << "\n"; break;
    }
    return r.exit_code();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"kerbtrip: two-variant ticket authentication engine, simulator and daemons"};
    app.require_subcommand(1);

    SimRunArgs run_args;
    auto* run = app.add_subcommand("sim-run", "Run one scenario and check its [expect] block");
    run->add_option("scenario", run_args.scenario, "scenario file")->required();
    run->add_option("--seed", run_args.seed, "run seed");
    run->add_option("--trace-out", run_args.trace_out, "write the trace as JSON lines");
    run->add_flag("--canonical", run_args.canonical, "omit frame bytes from the trace");
    run_args.over.add_to(run);

    MatrixArgs matrix_args;
    auto* matrix = app.add_subcommand("sim-matrix", "Run the variant x scenario attack matrix");
    matrix->add_option("--seed", matrix_args.seed, "run seed");
    matrix->add_option("--out", matrix_args.out, "also write the table here");
    matrix->add_option("--scenario-dir", matrix_args.scenario_dir, "directory with the bundled scenarios");
    matrix->add_option("--trace-dir", matrix_args.trace_dir, "write each canonical trace here");

    std::string dump_path;
    bool dump_canonical = false;
    auto* dump = app.add_subcommand("trace-dump", "Decode a trace file");
    dump->add_option("trace", dump_path, "trace file")->required();
    dump->add_flag("--canonical", dump_canonical, "re-emit canonical JSON lines");

    KeytabArgs kt_args;
    auto* ktgen = app.add_subcommand("keytab-gen", "Write keytabs for AS, TGS and each server");
    ktgen->add_option("--out-dir", kt_args.out_dir, "output directory");
    ktgen->add_option("--client", kt_args.clients, "NAME:PW1,PW2,PW3 (repeatable)")->required();
    ktgen->add_option("--tgs", kt_args.tgs, "TGS principal name");
    ktgen->add_option("--server", kt_args.servers, "server principal (repeatable)");
    ktgen->add_option("--seed", kt_args.seed, "derive long-term keys from a seed instead of OS entropy");

    ServeArgs serve_args;
    auto* srv = app.add_subcommand("serve", "Run an AS, TGS or V daemon");
    srv->add_option("--role", serve_args.role, "as, tgs or v")->required()->check(CLI::IsMember({"as", "tgs", "v"}));
    srv->add_option("--listen", serve_args.listen, "HOST:PORT")->required();
    srv->add_option("--keytab", serve_args.keytab, "keytab file")->required()->check(CLI::ExistingFile);
    srv->add_option("--peer", serve_args.peers, "ROLE=HOST:PORT (repeatable)");
    srv->add_option("--id", serve_args.id, "principal name (default: the role)");
    serve_args.over.add_to(srv);

    ClientArgs client_args;
    auto* cli = app.add_subcommand("client-auth", "Authenticate to a server through live daemons");
    cli->add_option("--client", client_args.client, "client principal")->required();
    cli->add_option("--passwords", client_args.passwords, "PW1,PW2,PW3 (or set KERBTRIP_PASSWORDS)");
    cli->add_option("--addr", client_args.addr, "address to claim in authenticators");
    cli->add_option("--target", client_args.target, "server principal");
    cli->add_option("--peer", client_args.peers, "as=, tgs=, v=HOST:PORT (repeatable)");
    client_args.over.add_to(cli);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        auto code = app.exit(e);
        return code == 0 ? exit_ok : exit_error;
    }

    setup_logging(srv->parsed() ? spdlog::level::info : spdlog::level::warn);
    try {
        if (run->parsed()) return sim_run(run_args);
        if (matrix->parsed()) return sim_matrix(matrix_args);
        if (dump->parsed()) return trace_dump(dump_path, dump_canonical);
        if (ktgen->parsed()) return keytab_gen(kt_args);
        if (srv->parsed()) return serve(serve_args);
        if (cli->parsed()) return client_auth_cmd(client_args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_error;
    }
    return exit_error;
}
