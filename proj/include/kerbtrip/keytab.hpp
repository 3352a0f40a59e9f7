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

#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "kerbtrip/crypto.hpp"

namespace kerbtrip {

// Keytab files hold one `principal:index:hex(key)` record per line.
// Index 0 is a long-term service key; 1..3 are a client's password-derived keys.

struct KeytabEntry {
    PrincipalId principal;
    int index;
    SymmetricKey key;

    bool operator==(const KeytabEntry&) const = default;
};

class KeytabError : public Error {
public:
    using Error::Error;
};

class Keytab {
public:
    void add(KeytabEntry e) { entries_.push_back(std::move(e)); }

    const std::vector<KeytabEntry>& entries() const noexcept { return entries_; }

    std::optional<SymmetricKey> find(const PrincipalId& p, int index) const {
        for (const auto& e : entries_)
            if (e.principal == p && e.index == index) return e.key;
        return std::nullopt;
    }

    /// Long-term (index 0) keys by principal.
    std::map<PrincipalId, SymmetricKey> long_term_keys() const {
        std::map<PrincipalId, SymmetricKey> out;
        for (const auto& e : entries_)
            if (e.index == 0) out.insert_or_assign(e.principal, e.key);
        return out;
    }

    void write(std::ostream& os) const {
        for (const auto& e : entries_) os << e.principal.str() << ':' << e.index << ':' << e.key.hex() << '\n';
    }

    static Keytab read(std::istream& is) {
        Keytab kt;
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty() || line[0] == '#') continue;
            auto fail = [&](const std::string& why) {
                return KeytabError("keytab line " + std::to_string(lineno) + ": " + why);
            };
            // Principal names may contain ':', so split from the right.
            auto c2 = line.rfind(':');
            if (c2 == std::string::npos || c2 == 0) throw fail("expected principal:index:hex");
            auto c1 = line.rfind(':', c2 - 1);
            if (c1 == std::string::npos) throw fail("expected principal:index:hex");
            int index = 0;
            try {
                std::size_t used = 0;
                index = std::stoi(line.substr(c1 + 1, c2 - c1 - 1), &used);
                if (used != c2 - c1 - 1) throw std::invalid_argument("junk");
            } catch (const std::exception&) {
                throw fail("bad key index");
            }
            if (index < 0 || index > 3) throw fail("key index out of range");
            try {
                auto raw = from_hex(line.substr(c2 + 1));
                auto origin = index == 0 ? KeyOrigin::long_term : KeyOrigin::password_derived;
                kt.add({PrincipalId(line.substr(0, c1)), index, SymmetricKey::from_bytes(raw, origin)});
            } catch (const std::invalid_argument& e) {
                throw fail(e.what());
            }
        }
        return kt;
    }

    void save(const std::string& path) const {
        std::ofstream os(path);
        if (!os) throw KeytabError("cannot write keytab " + path);
        write(os);
    }

    static Keytab load(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw KeytabError("cannot read keytab " + path);
        return read(is);
    }

private:
    std::vector<KeytabEntry> entries_;
};

struct ClientPasswords {
    PrincipalId client;
    std::string pw1, pw2, pw3;
};

/// Keytabs for one realm: AS holds client keys and the TGS key, TGS holds
/// its own key and the servers', each server holds only its own.
struct RealmKeytabs {
    Keytab as, tgs;
    std::map<PrincipalId, Keytab> servers;
};

inline RealmKeytabs make_realm_keytabs(const std::vector<ClientPasswords>& clients, const PrincipalId& tgs,
                                       const std::vector<PrincipalId>& servers, RandomSource& rng) {
    RealmKeytabs r;
    for (const auto& c : clients) {
        r.as.add({c.client, 1, derive_key(c.pw1, c.client, 1)});
        r.as.add({c.client, 2, derive_key(c.pw2, c.client, 2)});
        r.as.add({c.client, 3, derive_key(c.pw3, c.client, 3)});
    }
    auto long_term = [&] {
        auto k = gen_session_key(rng);
        k.origin = KeyOrigin::long_term;
        return k;
    };
    auto k_tgs = long_term();
    r.as.add({tgs, 0, k_tgs});
    r.tgs.add({tgs, 0, k_tgs});
    for (const auto& v : servers) {
        auto k = long_term();
        r.tgs.add({v, 0, k});
        r.servers[v].add({v, 0, k});
    }
    return r;
}

}  // namespace kerbtrip
