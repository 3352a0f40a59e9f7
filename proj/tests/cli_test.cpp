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

#include <gtest/gtest.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "kerbtrip/keytab.hpp"
#include "kerbtrip/transport.hpp"

namespace kerbtrip {
namespace {

namespace fs = std::filesystem;

struct Run {
    int code;
    std::string out;
};

/// Runs the CLI through the shell; stderr is folded into the output.
Run cli(const std::string& args) {
    std::string cmd = std::string(KERBTRIP_CLI) + " " + args + " 2>&1";
    FILE* p = ::popen(cmd.c_str(), "r");
    std::string out;
    char buf[512];
    while (auto n = std::fread(buf, 1, sizeof buf, p)) out.append(buf, n);
    int status = ::pclose(p);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string scenario(const std::string& name) { return std::string(KERBTRIP_SCENARIO_DIR) + "/" + name + ".scn"; }

std::string slurp(const fs::path& p) {
    std::ifstream is(p);
    return {std::istreambuf_iterator<char>(is), {}};
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir = fs::temp_directory_path() /
              ("kerbtrip-cli-" + std::to_string(::getpid()) + "-" +
               ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }
    fs::path dir;
};

TEST_F(Cli, SimRunMatchingExpectation) {
    auto r = cli("sim-run " + scenario("attack2-triple") + " --seed 1");
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("attacker_succeeded=false alerts=1"), std::string::npos) << r.out;
}

TEST_F(Cli, SimRunMismatchExitsTwo) {
    auto text = slurp(scenario("attack1-triple"));
    auto pos = text.find("attacker_succeeded = false");
    ASSERT_NE(pos, std::string::npos);
    text.replace(pos, 26, "attacker_succeeded = true");
    auto path = dir / "flipped.scn";
    std::ofstream(path) << text;
    auto r = cli("sim-run " + path.string());
    EXPECT_EQ(r.code, 2) << r.out;
    EXPECT_NE(r.out.find("mismatch: attacker_succeeded"), std::string::npos);
}

TEST_F(Cli, SimRunErrorsExitOne) {
    auto missing = cli("sim-run " + (dir / "nope.scn").string());
    EXPECT_EQ(missing.code, 1);
    EXPECT_NE(missing.out.find("cannot read scenario"), std::string::npos) << missing.out;

    auto path = dir / "broken.scn";
    std::ofstream(path) << "[variant]\nmode = triple\n[timing]\ntimer_duration = soon\n";
    auto broken = cli("sim-run " + path.string());
    EXPECT_EQ(broken.code, 1);
    EXPECT_NE(broken.out.find("line 4"), std::string::npos) << broken.out;

    EXPECT_EQ(cli("").code, 1);
    EXPECT_EQ(cli("sim-run").code, 1);
    EXPECT_EQ(cli("frobnicate").code, 1);
    EXPECT_EQ(cli("--help").code, 0);
}

TEST_F(Cli, SimRunOverridesAndTrace) {
    auto trace = dir / "t.jsonl";
    auto r = cli("sim-run " + scenario("honest-triple") + " --variant baseline --trace-out " + trace.string());
    EXPECT_EQ(r.code, 0) << r.out;
    auto text = slurp(trace);
    EXPECT_NE(text.find("\"msg\":\"B1 "), std::string::npos);
    EXPECT_NE(text.find("\"frame\":\"4b545031"), std::string::npos);

    auto dump = cli("trace-dump " + trace.string());
    EXPECT_EQ(dump.code, 0);
    EXPECT_NE(dump.out.find("send       alice>as B1 client=alice"), std::string::npos) << dump.out;

    auto canon_trace = dir / "c.jsonl";
    cli("sim-run " + scenario("honest-triple") + " --variant baseline --canonical --trace-out " + canon_trace.string());
    auto canon = cli("trace-dump --canonical " + trace.string());
    EXPECT_EQ(canon.out, slurp(canon_trace));
}

TEST_F(Cli, TraceDumpRejectsBadLines) {
    auto path = dir / "bad.jsonl";
    std::ofstream(path) << "{\"tick\":1}\n";
    auto r = cli("trace-dump " + path.string());
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.out.find("line 1"), std::string::npos) << r.out;
}

TEST_F(Cli, MatrixIsDeterministicAndMatchesClaims) {
    auto a = dir / "a.txt";
    auto b = dir / "b.txt";
    auto ra = cli("sim-matrix --seed 1 --out " + a.string() + " --trace-dir " + dir.string());
    auto rb = cli("sim-matrix --seed 1 --out " + b.string());
    EXPECT_EQ(ra.code, 0) << ra.out;
    EXPECT_EQ(rb.code, 0);
    EXPECT_EQ(slurp(a), slurp(b));
    auto table = slurp(a);
    EXPECT_NE(table.find("baseline  attack1  alice,mallory"), std::string::npos) << table;
    EXPECT_NE(table.find("granted   ok"), std::string::npos);
    EXPECT_NE(table.find("triple    attack2  alice           timeout,bad_password     2"), std::string::npos) << table;
    EXPECT_EQ(table.find("DEVIATES"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir / "attack2-triple-silent.jsonl"));
}

TEST_F(Cli, KeytabGen) {
    auto r = cli("keytab-gen --out-dir " + dir.string() + " --client alice:a,b,c --client bob:d,e,f --server v --server w --seed 3");
    EXPECT_EQ(r.code, 0) << r.out;
    auto as = Keytab::load((dir / "as.keytab").string());
    EXPECT_EQ(as.entries().size(), 7u);
    EXPECT_EQ(*as.find(PrincipalId("bob"), 2), derive_key("e", PrincipalId("bob"), 2));
    auto tgs = Keytab::load((dir / "tgs.keytab").string());
    auto w = Keytab::load((dir / "w.keytab").string());
    EXPECT_EQ(*tgs.find(PrincipalId("w"), 0), *w.find(PrincipalId("w"), 0));
    EXPECT_EQ(*as.find(PrincipalId("tgs"), 0), *tgs.find(PrincipalId("tgs"), 0));
    EXPECT_EQ(fs::status(dir / "as.keytab").permissions() & fs::perms::others_read, fs::perms::none);
    EXPECT_EQ(cli("keytab-gen --out-dir " + dir.string() + " --client alice:a,b").code, 1);
}

/// Child process killed on scope exit.
class Daemon {
public:
    explicit Daemon(std::vector<std::string> args) {
        pid_ = ::fork();
        if (pid_ == 0) {
            std::vector<char*> argv;
            std::string exe = KERBTRIP_CLI;
            argv.push_back(exe.data());
            for (auto& a : args) argv.push_back(a.data());
            argv.push_back(nullptr);
            ::setenv("KERBTRIP_LOG", "off", 1);
            ::execv(exe.c_str(), argv.data());
            ::_exit(127);
        }
    }
    ~Daemon() {
        ::kill(pid_, SIGTERM);
        int status = 0;
        ::waitpid(pid_, &status, 0);
    }

private:
    pid_t pid_ = -1;
};

bool wait_listening(std::uint16_t port) {
    for (int i = 0; i < 200; ++i) {
        try {
            net::Socket::connect({"127.0.0.1", port});
            return true;
        } catch (const net::NetworkError&) {
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
    }
    return false;
}

TEST_F(Cli, ServeAndClientAuth) {
    ASSERT_EQ(cli("keytab-gen --out-dir " + dir.string() + " --client alice:p1,p2,p3").code, 0);
    std::map<std::string, std::uint16_t> ports;
    for (const char* r : {"as", "tgs", "v"}) ports[r] = net::Listener::bind({"127.0.0.1", 0}).port();
    std::vector<std::string> peers;
    for (const auto& [r, p] : ports) {
        peers.push_back("--peer");
        peers.push_back(r + "=127.0.0.1:" + std::to_string(p));
    }
    auto peer_flags = std::string();
    for (const auto& p : peers) peer_flags += " " + p;

    auto start = [&](const std::string& role) {
        std::vector<std::string> args = {"serve", "--role", role, "--listen", "127.0.0.1:" + std::to_string(ports[role]),
                                         "--keytab", (dir / (role + ".keytab")).string()};
        args.insert(args.end(), peers.begin(), peers.end());
        return std::make_unique<Daemon>(args);
    };
    auto as = start("as");
    auto v = start("v");
    ASSERT_TRUE(wait_listening(ports["as"]));
    ASSERT_TRUE(wait_listening(ports["v"]));

    // TGS not running yet.
    auto down = cli("client-auth --client alice --passwords p1,p2,p3" + peer_flags);
    EXPECT_EQ(down.code, 1) << down.out;

    auto tgs = start("tgs");
    ASSERT_TRUE(wait_listening(ports["tgs"]));
    auto ok = cli("client-auth --client alice --passwords p1,p2,p3" + peer_flags);
    EXPECT_EQ(ok.code, 0) << ok.out;
    std::size_t steps = 0;
    for (std::size_t pos = 0; (pos = ok.out.find("step ", pos)) != std::string::npos; ++pos) ++steps;
    EXPECT_EQ(steps, 8u) << ok.out;

    auto wrong = cli("client-auth --client alice --passwords nope,p2,p3" + peer_flags);
    EXPECT_EQ(wrong.code, 3) << wrong.out;
    EXPECT_NE(wrong.out.find("OpenFailure"), std::string::npos);

    auto env = cli("client-auth --client alice" + peer_flags);
    EXPECT_EQ(env.code, 1);
}

}  // namespace
}  // namespace kerbtrip
