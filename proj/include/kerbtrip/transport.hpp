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

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <spdlog/spdlog.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <functional>
#include <list>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "kerbtrip/codec.hpp"
#include "kerbtrip/keytab.hpp"
#include "kerbtrip/principals.hpp"

namespace kerbtrip::net {

class NetworkError : public Error {
public:
    using Error::Error;
};

class DaemonError : public Error {
public:
    using Error::Error;
};

struct Endpoint {
    std::string host;
    std::uint16_t port = 0;

    /// "host:port"; the port may be 0 when binding.
    static Endpoint parse(std::string_view s) {
        auto colon = s.rfind(':');
        if (colon == std::string_view::npos || colon == 0) throw std::invalid_argument("expected host:port, got '" + std::string(s) + "'");
        Endpoint e{std::string(s.substr(0, colon)), 0};
        auto port = s.substr(colon + 1);
        unsigned long v = 0;
        try {
            std::size_t used = 0;
            v = std::stoul(std::string(port), &used);
            if (used != port.size()) throw std::invalid_argument("");
        } catch (const std::exception&) {
            throw std::invalid_argument("bad port in '" + std::string(s) + "'");
        }
        if (v > 65535) throw std::invalid_argument("port out of range in '" + std::string(s) + "'");
        e.port = static_cast<std::uint16_t>(v);
        return e;
    }

    std::string str() const { return host + ":" + std::to_string(port); }
};

inline Timestamp wall_clock() {
    using namespace std::chrono;
    return duration_cast<seconds>(system_clock::now().time_since_epoch()).count();
}

namespace detail {

inline sockaddr_in resolve(const Endpoint& ep) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (int rc = ::getaddrinfo(ep.host.c_str(), nullptr, &hints, &res); rc != 0)
        throw NetworkError("cannot resolve " + ep.host + ": " + ::gai_strerror(rc));
    sockaddr_in addr{};
    std::memcpy(&addr, res->ai_addr, sizeof addr);
    ::freeaddrinfo(res);
    addr.sin_port = htons(ep.port);
    return addr;
}

inline std::string errno_text(const std::string& what) { return what + ": " + std::strerror(errno); }

}  // namespace detail

/// Owning TCP socket descriptor.
class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
    Socket& operator=(Socket&& o) noexcept {
        if (this != &o) {
            close();
            fd_ = std::exchange(o.fd_, -1);
        }
        return *this;
    }
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    ~Socket() { close(); }

    static Socket connect(const Endpoint& ep) {
        auto addr = detail::resolve(ep);
        Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
        if (!s.valid()) throw NetworkError(detail::errno_text("socket"));
        if (::connect(s.fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
            throw NetworkError(detail::errno_text("connect " + ep.str()));
        int one = 1;
        ::setsockopt(s.fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        return s;
    }

    bool valid() const noexcept { return fd_ >= 0; }
    int fd() const noexcept { return fd_; }

    void send_all(ByteView data) {
        while (!data.empty()) {
            auto n = ::send(fd_, data.data(), data.size(), MSG_NOSIGNAL);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw NetworkError(detail::errno_text("send"));
            }
            data = data.subspan(static_cast<std::size_t>(n));
        }
    }

    /// Bytes read, 0 on orderly close, nullopt on timeout.
    std::optional<std::size_t> recv_some(std::span<std::uint8_t> buf, std::chrono::milliseconds timeout) {
        pollfd p{fd_, POLLIN, 0};
        int rc;
        do {
            rc = ::poll(&p, 1, timeout.count() < 0 ? -1 : static_cast<int>(timeout.count()));
        } while (rc < 0 && errno == EINTR);
        if (rc < 0) throw NetworkError(detail::errno_text("poll"));
        if (rc == 0) return std::nullopt;
        auto n = ::recv(fd_, buf.data(), buf.size(), 0);
        if (n < 0) {
            if (errno == ECONNRESET) return 0;
            throw NetworkError(detail::errno_text("recv"));
        }
        return static_cast<std::size_t>(n);
    }

    /// IPv4 address of the remote end, e.g. "127.0.0.1".
    std::string peer_host() const {
        sockaddr_in a{};
        socklen_t len = sizeof a;
        if (::getpeername(fd_, reinterpret_cast<sockaddr*>(&a), &len) != 0) return "unknown";
        char buf[INET_ADDRSTRLEN] = {};
        ::inet_ntop(AF_INET, &a.sin_addr, buf, sizeof buf);
        return buf;
    }

    void shutdown() noexcept {
        if (valid()) ::shutdown(fd_, SHUT_RDWR);
    }

    void close() noexcept {
        if (valid()) ::close(std::exchange(fd_, -1));
    }

private:
    int fd_ = -1;
};

class Listener {
public:
    static Listener bind(const Endpoint& ep) {
        auto addr = detail::resolve(ep);
        Listener l;
        l.sock_ = Socket(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
        if (!l.sock_.valid()) throw NetworkError(detail::errno_text("socket"));
        int one = 1;
        ::setsockopt(l.sock_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        if (::bind(l.sock_.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
            throw NetworkError(detail::errno_text("bind " + ep.str()));
        if (::listen(l.sock_.fd(), 64) != 0) throw NetworkError(detail::errno_text("listen"));
        sockaddr_in bound{};
        socklen_t len = sizeof bound;
        ::getsockname(l.sock_.fd(), reinterpret_cast<sockaddr*>(&bound), &len);
        l.port_ = ntohs(bound.sin_port);
        return l;
    }

    std::uint16_t port() const noexcept { return port_; }

    /// Next connection, or an invalid socket once the listener is shut down.
    Socket accept() {
        for (;;) {
            int fd = ::accept4(sock_.fd(), nullptr, nullptr, SOCK_CLOEXEC);
            if (fd >= 0) return Socket(fd);
            if (errno == EINTR || errno == ECONNABORTED) continue;
            return Socket();
        }
    }

    void shutdown() noexcept { sock_.shutdown(); }

private:
    Socket sock_;
    std::uint16_t port_ = 0;
};

/// Socket plus streaming frame decoder.
class FrameConnection {
public:
    explicit FrameConnection(Socket s) : sock_(std::move(s)) {}

    static FrameConnection connect(const Endpoint& ep) { return FrameConnection(Socket::connect(ep)); }

    void write(const Message& m) { sock_.send_all(encode(m)); }
    void write_raw(ByteView b) { sock_.send_all(b); }

    /// Next frame; nullopt on close or timeout. Throws CodecError on bad
    /// input.
    std::optional<Bytes> read_frame(std::chrono::milliseconds timeout = std::chrono::milliseconds(-1)) {
        auto deadline = std::chrono::steady_clock::now() + timeout;
        std::array<std::uint8_t, 4096> buf{};
        for (;;) {
            if (auto f = dec_.next_frame()) return f;
            auto left = timeout.count() < 0 ? timeout
                                            : std::chrono::duration_cast<std::chrono::milliseconds>(
                                                  deadline - std::chrono::steady_clock::now());
            if (timeout.count() >= 0 && left.count() <= 0) return std::nullopt;
            auto n = sock_.recv_some(buf, left);
            if (!n || *n == 0) return std::nullopt;
            dec_.feed(ByteView(buf.data(), *n));
        }
    }

    Socket& socket() noexcept { return sock_; }

private:
    Socket sock_;
    FrameDecoder dec_;
};

// ---------------------------------------------------------------------------
// Daemons

enum class Role { as, tgs, v };

inline std::string_view to_string(Role r) {
    switch (r) {
        case Role::as: return "as";
        case Role::tgs: return "tgs";
        case Role::v: return "v";
    }
    return "?";
}

inline Role parse_role(std::string_view s) {
    if (s == "as") return Role::as;
    if (s == "tgs") return Role::tgs;
    if (s == "v") return Role::v;
    throw std::invalid_argument("unknown role '" + std::string(s) + "' (as, tgs, v)");
}

struct DaemonConfig {
    Role role = Role::as;
    Endpoint listen{"127.0.0.1", 0};
    std::string keytab_path;
    std::optional<Keytab> keytab;  // used instead of keytab_path when set
    std::map<std::string, Endpoint> peers;  // by role name or principal name
    Variant variant = Variant::triple;
    Timing timing;
    std::optional<PrincipalId> id;  // defaults to the role name
    PrincipalId as_id{"as"};
    PrincipalId tgs_id{"tgs"};
    std::optional<std::uint64_t> seed;
    std::function<Timestamp()> clock;
    std::chrono::milliseconds sweep_interval{100};
    std::chrono::milliseconds hold{2000};  // wait for a forwarded key before denying

    PrincipalId principal() const { return id.value_or(PrincipalId(std::string(to_string(role)))); }
};

/// Peers each role must know about.
inline void check_peers(const DaemonConfig& cfg) {
    auto need = [&](const char* r) {
        if (!cfg.peers.contains(r))
            throw DaemonError(std::string(to_string(cfg.role)) + " daemon needs --peer " + r + "=HOST:PORT");
    };
    switch (cfg.role) {
        case Role::as: need("tgs"); break;
        case Role::tgs:
            need("as");
            need("v");
            break;
        case Role::v: need("tgs"); break;
    }
}

/// One record per daemon event; mirrors the simulator's event fields.
struct DaemonEvent {
    Timestamp at = 0;
    std::string kind;
    std::string src, dst;
    std::optional<Message> msg;
    std::string meta;
};

/// A principal behind a TCP listener. Handlers for the principal run one
/// at a time; V also runs a periodic deadline sweep.
class Daemon {
public:
    explicit Daemon(DaemonConfig cfg) : cfg_(std::move(cfg)) {
        check_peers(cfg_);
        if (!cfg_.clock) cfg_.clock = wall_clock;
        auto keytab = cfg_.keytab ? *cfg_.keytab : Keytab::load(cfg_.keytab_path);
        auto id = cfg_.principal();
        auto rng = cfg_.seed ? RandomSource::seeded(derive_seed(*cfg_.seed, "rng:" + id.str())) : RandomSource::system();
        auto nonces = cfg_.seed ? NonceSource::counter(derive_seed(*cfg_.seed, "nonce:" + id.str())) : NonceSource::system();
        auto own_key = [&] {
            auto k = keytab.find(id, 0);
            if (!k) throw DaemonError("keytab has no long-term key for " + id.str());
            return *k;
        };
        switch (cfg_.role) {
            case Role::as: {
                AuthServer as(id, cfg_.variant, cfg_.timing, rng, nonces);
                std::map<PrincipalId, std::array<std::optional<SymmetricKey>, 3>> pw;
                for (const auto& e : keytab.entries()) {
                    if (e.index == 0) {
                        if (e.principal != id) as.add_tgs(e.principal, e.key);
                    } else {
                        pw[e.principal][static_cast<std::size_t>(e.index - 1)] = e.key;
                    }
                }
                for (const auto& [client, keys] : pw) {
                    if (!keys[0] || !keys[1] || !keys[2])
                        throw DaemonError("keytab lacks one of the three keys for client " + client.str());
                    as.register_keys({client, *keys[0], *keys[1], *keys[2]});
                }
                principal_.emplace<AuthServer>(std::move(as));
                break;
            }
            case Role::tgs: {
                TicketGrantingServer tgs(id, own_key(), cfg_.as_id, cfg_.variant, cfg_.timing, rng, nonces);
                for (const auto& [p, k] : keytab.long_term_keys())
                    if (p != id) tgs.add_server(p, k);
                principal_.emplace<TicketGrantingServer>(std::move(tgs));
                break;
            }
            case Role::v:
                principal_.emplace<ApplicationServer>(
                    ApplicationServer(id, own_key(), cfg_.tgs_id, cfg_.variant, cfg_.timing, rng, nonces));
                break;
        }
    }

    Daemon(const Daemon&) = delete;
    Daemon& operator=(const Daemon&) = delete;
    ~Daemon() { stop(); }

    /// Binds and starts serving; returns the bound port.
    std::uint16_t start() {
        listener_ = Listener::bind(cfg_.listen);
        spdlog::info("{} daemon ({}) listening on {}:{}", to_string(cfg_.role), to_string(cfg_.variant), cfg_.listen.host,
                     listener_->port());
        acceptor_ = std::thread([this] { accept_loop(); });
        if (cfg_.role == Role::v) sweeper_ = std::thread([this] { sweep_loop(); });
        return listener_->port();
    }

    void stop() {
        if (stopping_.exchange(true)) return;
        sweep_cv_.notify_all();
        if (listener_) listener_->shutdown();
        if (acceptor_.joinable()) acceptor_.join();
        if (sweeper_.joinable()) sweeper_.join();
        {
            std::lock_guard lk(conns_mu_);
            for (auto& c : conns_) c.sock->shutdown();
        }
        for (auto& c : conns_)
            if (c.thread.joinable()) c.thread.join();
        conns_.clear();
        std::lock_guard lk(peers_mu_);
        links_.clear();
    }

    const DaemonConfig& config() const noexcept { return cfg_; }
    std::uint16_t port() const { return listener_ ? listener_->port() : 0; }

    std::vector<DaemonEvent> events() const {
        std::lock_guard lk(events_mu_);
        return events_;
    }

    /// Blocks until some event satisfies `pred` or the timeout passes.
    bool wait_for(const std::function<bool(const DaemonEvent&)>& pred, std::chrono::milliseconds timeout) const {
        std::unique_lock lk(events_mu_);
        return events_cv_.wait_for(lk, timeout, [&] { return std::any_of(events_.begin(), events_.end(), pred); });
    }

    /// Runs `f` with exclusive access to the principal, which must be a P.
    template <typename P, typename F>
    auto with_principal(F&& f) {
        std::lock_guard lk(state_mu_);
        return f(std::get<P>(principal_));
    }

private:
    struct Conn {
        std::shared_ptr<Socket> sock;
        std::thread thread;
        std::shared_ptr<std::atomic<bool>> done;
    };

    struct PeerLink {
        std::mutex mu;
        std::optional<FrameConnection> conn;
    };

    void record(std::string kind, std::string src, std::string dst, std::optional<Message> msg, std::string meta = {}) {
        auto at = cfg_.clock();
        spdlog::info("kind={} src={} dst={} msg={} meta={}", kind, src, dst, msg ? describe(*msg) : std::string("-"), meta);
        {
            std::lock_guard lk(events_mu_);
            events_.push_back({at, std::move(kind), std::move(src), std::move(dst), std::move(msg), std::move(meta)});
        }
        events_cv_.notify_all();
    }

    void accept_loop() {
        while (!stopping_) {
            auto s = listener_->accept();
            if (!s.valid()) break;
            std::lock_guard lk(conns_mu_);
            std::erase_if(conns_, [](Conn& c) {
                if (!*c.done) return false;
                c.thread.join();
                return true;
            });
            if (stopping_) break;
            auto sock = std::make_shared<Socket>(std::move(s));
            auto done = std::make_shared<std::atomic<bool>>(false);
            conns_.push_back({sock, std::thread([this, sock, done] {
                                  serve_connection(*sock);
                                  sock->shutdown();
                                  *done = true;
                              }),
                              done});
        }
    }

    void serve_connection(Socket& sock) {
        auto peer = sock.peer_host();
        FrameDecoder dec;
        std::array<std::uint8_t, 4096> buf{};
        try {
            for (;;) {
                auto n = sock.recv_some(buf, std::chrono::milliseconds(-1));
                if (!n || *n == 0) return;
                dec.feed(ByteView(buf.data(), *n));
                while (auto frame = dec.next_frame()) {
                    Message msg = decode(*frame);
                    process(msg, peer, sock);
                }
            }
        } catch (const CodecError& e) {
            record("drop", peer, cfg_.principal().str(), std::nullopt,
                   std::string("codec error: ") + to_string(e.kind()) + "; connection closed");
        } catch (const NetworkError& e) {
            spdlog::debug("connection from {} ended: {}", peer, e.what());
        }
    }

    void process(const Message& msg, const std::string& peer, Socket& sock) {
        auto self = cfg_.principal().str();
        auto until = std::chrono::steady_clock::now() + cfg_.hold;
        Reaction r;
        for (;;) {
            {
                std::lock_guard lk(state_mu_);
                r = std::visit(
                    [&](auto& p) -> Reaction {
                        if constexpr (std::is_same_v<std::decay_t<decltype(p)>, std::monostate>) {
                            return {};
                        } else {
                            return p.handle(msg, NetworkAddress(peer), cfg_.clock());
                        }
                    },
                    principal_);
            }
            // The forwarded key travels on a different connection and may
            // not have arrived yet.
            if (r.denied != DenyReason::NoForwardedPassword || std::chrono::steady_clock::now() >= until || stopping_)
                break;
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
        if (r.denied) {
            record("drop", peer, self, msg, std::string(to_string(*r.denied)));
        } else {
            record("deliver", peer, self, msg);
        }
        dispatch(r, &sock, peer);
    }

    void sweep_loop() {
        std::mutex m;
        std::unique_lock lk(m);
        while (!stopping_) {
            sweep_cv_.wait_for(lk, cfg_.sweep_interval, [&] { return stopping_.load(); });
            if (stopping_) break;
            Reaction r;
            {
                std::lock_guard st(state_mu_);
                r = std::get<ApplicationServer>(principal_).tick(cfg_.clock());
            }
            for (const auto& o : r.out)
                record("timer_fire", cfg_.principal().str(), cfg_.principal().str(), std::nullopt,
                       "challenge for " + std::get<M9>(o.msg).alert.client.str() + " expired");
            dispatch(r, nullptr, {});
        }
    }

    /// Sends what a reaction produced, in order.
    void dispatch(const Reaction& r, Socket* reply, const std::string& peer) {
        auto self = cfg_.principal().str();
        if (r.grant) record("grant", self, peer, std::nullopt, "client=" + r.grant->client.str());
        for (const auto& n : r.notices) {
            spdlog::warn("compromise notice: client={} suspect={} incident={} suspicion={}", n.client.str(),
                         n.suspect_addr.str(), to_string(n.incident), to_string(n.suspicion));
            record("notice", self, self, std::nullopt,
                   "client=" + n.client.str() + " suspect=" + n.suspect_addr.str() +
                       " incident=" + std::string(to_string(n.incident)));
        }
        for (const auto& o : r.out) {
            if (o.to) {
                if (const auto* m9 = std::get_if<M9>(&o.msg))
                    record("alert", self, o.to->str(), std::nullopt,
                           "incident=" + std::string(to_string(m9->alert.incident)) + " client=" + m9->alert.client.str());
                forward(*o.to, o.msg);
            } else if (reply) {
                try {
                    reply->send_all(encode(o.msg));
                    record("send", self, peer, o.msg);
                } catch (const NetworkError& e) {
                    record("drop", self, peer, o.msg, e.what());
                }
            }
        }
    }

    std::optional<Endpoint> peer_for(const PrincipalId& to, const Message& m) const {
        if (auto it = cfg_.peers.find(to.str()); it != cfg_.peers.end()) return it->second;
        const char* role = nullptr;
        if (std::holds_alternative<M2_2>(m) || std::holds_alternative<M9>(m)) role = "tgs";
        if (std::holds_alternative<M4_2>(m)) role = "v";
        if (std::holds_alternative<M10>(m)) role = "as";
        if (!role) return std::nullopt;
        auto it = cfg_.peers.find(role);
        return it == cfg_.peers.end() ? std::nullopt : std::optional(it->second);
    }

    void forward(const PrincipalId& to, const Message& m) {
        auto self = cfg_.principal().str();
        auto ep = peer_for(to, m);
        if (!ep) return record("drop", self, to.str(), m, "no peer address");
        std::shared_ptr<PeerLink> link;
        {
            std::lock_guard lk(peers_mu_);
            auto& slot = links_[to.str()];
            if (!slot) slot = std::make_shared<PeerLink>();
            link = slot;
        }
        std::lock_guard lk(link->mu);
        for (int attempt = 0; attempt < 2; ++attempt) {
            try {
                if (!link->conn) link->conn.emplace(FrameConnection::connect(*ep));
                link->conn->write(m);
                return record("send", self, to.str(), m);
            } catch (const NetworkError& e) {
                link->conn.reset();
                if (attempt == 1) record("drop", self, to.str(), m, e.what());
            }
        }
    }

    DaemonConfig cfg_;
    std::variant<std::monostate, AuthServer, TicketGrantingServer, ApplicationServer> principal_;
    std::mutex state_mu_;

    std::optional<Listener> listener_;
    std::thread acceptor_, sweeper_;
    std::atomic<bool> stopping_{false};
    std::condition_variable sweep_cv_;

    std::mutex conns_mu_;
    std::list<Conn> conns_;

    std::mutex peers_mu_;
    std::map<std::string, std::shared_ptr<PeerLink>> links_;

    mutable std::mutex events_mu_;
    mutable std::condition_variable events_cv_;
    std::vector<DaemonEvent> events_;
};

// ---------------------------------------------------------------------------
// Client workflow

struct ClientAuthConfig {
    ClientConfig client;
    std::map<std::string, Endpoint> peers;  // "as", "tgs", and the target by name or as "v"
    std::chrono::milliseconds io_timeout{5000};  // added to the challenge timer while waiting
    std::optional<std::uint64_t> seed;
    std::function<Timestamp()> clock;
};

struct ClientStep {
    bool outgoing;
    Timestamp at;
    std::string peer;
    Message msg;

    std::string line(std::size_t n) const {
        return "step " + std::to_string(n) + " t=" + std::to_string(at) + (outgoing ? " -> " : " <- ") + peer + " " +
               describe(msg);
    }
};

struct ClientAuthResult {
    ClientOutcome outcome = ClientOutcome::Pending;
    ClientFailure failure = ClientFailure::None;
    std::vector<ClientStep> steps;
    std::string error;

    /// 0 on mutual authentication, 1 on network trouble, 3 on protocol failure.
    int exit_code() const {
        if (outcome == ClientOutcome::MutualAuthOk) return 0;
        return failure == ClientFailure::Network ? 1 : 3;
    }
};

/// Runs the client side of the exchange against live daemons, one
/// persistent connection per peer.
inline ClientAuthResult client_auth(const ClientAuthConfig& cfg, const PrincipalId& target_v,
                                    const std::function<void(const ClientStep&)>& on_step = {}) {
    auto clock = cfg.clock ? cfg.clock : std::function<Timestamp()>(wall_clock);
    const auto& id = cfg.client.id.str();
    Client client(cfg.client,
                  cfg.seed ? RandomSource::seeded(derive_seed(*cfg.seed, "rng:" + id)) : RandomSource::system(),
                  cfg.seed ? NonceSource::counter(derive_seed(*cfg.seed, "nonce:" + id)) : NonceSource::system());
    ClientAuthResult result;

    struct Mailbox {
        const ClientAuthConfig& cfg;
        const PrincipalId& target_v;
        ClientAuthResult& result;
        std::map<std::string, FrameConnection> conns{};
        FrameConnection* last = nullptr;
        std::string last_peer{};

        std::string role_of(const PrincipalId& to) const {
            if (cfg.peers.contains(to.str())) return to.str();
            if (to == cfg.client.as_id) return "as";
            if (to == cfg.client.tgs_id) return "tgs";
            return "v";
        }

        void send(const Outbound& o) {
            last = nullptr;
            auto key = role_of(*o.to);
            last_peer = o.to->str();
            try {
                auto it = conns.find(key);
                if (it == conns.end()) {
                    auto ep = cfg.peers.find(key);
                    if (ep == cfg.peers.end()) throw NetworkError("no address for " + key);
                    it = conns.emplace(key, FrameConnection::connect(ep->second)).first;
                }
                it->second.write(o.msg);
                last = &it->second;
            } catch (const NetworkError& e) {
                result.error = e.what();
            }
        }

        std::optional<Message> receive() {
            if (!last) return std::nullopt;
            auto wait = std::chrono::seconds(cfg.client.timing.timer_duration) + cfg.io_timeout;
            try {
                auto frame = last->read_frame(std::chrono::duration_cast<std::chrono::milliseconds>(wait));
                if (!frame) {
                    result.error = "no reply from " + last_peer;
                    return std::nullopt;
                }
                return decode(*frame);
            } catch (const Error& e) {
                result.error = e.what();
                return std::nullopt;
            }
        }
    } mailbox{cfg, target_v, result};

    std::string last_out;
    client_run(client, target_v, clock, mailbox, [&](bool outgoing, const Message& m) {
        if (outgoing) {
            auto t = type_byte(m);
            last_out = t == M1::type_byte || t == B1::type_byte   ? cfg.client.as_id.str()
                       : t == M3::type_byte || t == B3::type_byte ? cfg.client.tgs_id.str()
                                                                  : target_v.str();
        }
        result.steps.push_back({outgoing, clock(), last_out, m});
        if (on_step) on_step(result.steps.back());
    });
    result.outcome = client.outcome();
    result.failure = client.failure();
    return result;
}

}  // namespace kerbtrip::net
