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

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace kerbtrip {

/// Name of a client, KDC component or service. Non-empty, at most 255
/// bytes, no embedded NUL.
class PrincipalId {
public:
    explicit PrincipalId(std::string name) : name_(std::move(name)) {
        if (name_.empty()) throw std::invalid_argument("principal id must not be empty");
        if (name_.size() > 255) throw std::invalid_argument("principal id longer than 255 bytes");
        if (name_.find('\0') != std::string::npos)
            throw std::invalid_argument("principal id contains a NUL byte");
    }

    const std::string& str() const noexcept { return name_; }

    auto operator<=>(const PrincipalId&) const = default;

private:
    std::string name_;
};

/// Dotted quad or a simulator node label.
class NetworkAddress {
public:
    explicit NetworkAddress(std::string addr) : addr_(std::move(addr)) {
        if (addr_.empty()) throw std::invalid_argument("network address must not be empty");
    }

    const std::string& str() const noexcept { return addr_; }

    auto operator<=>(const NetworkAddress&) const = default;

private:
    std::string addr_;
};

/// Seconds, either logical ticks or wall clock.
using Timestamp = std::int64_t;
using Nonce = std::uint64_t;

struct Lifetime {
    Timestamp start = 0;
    Timestamp expiry = 0;

    Lifetime() = default;
    Lifetime(Timestamp s, Timestamp e) : start(s), expiry(e) {
        if (e < s) throw std::invalid_argument("lifetime expiry precedes start");
    }

    bool contains(Timestamp t) const noexcept { return start <= t && t <= expiry; }

    bool operator==(const Lifetime&) const = default;
};

/// True iff |now - ts| <= window.
inline bool check_freshness(Timestamp ts, Timestamp now, std::int64_t window) {
    if (window <= 0) throw std::invalid_argument("freshness window must be positive");
    auto skew = now > ts ? now - ts : ts - now;
    return skew <= window;
}

enum class Variant : std::uint8_t { baseline, triple };

inline std::string_view to_string(Variant v) { return v == Variant::baseline ? "baseline" : "triple"; }

inline Variant parse_variant(std::string_view s) {
    if (s == "baseline") return Variant::baseline;
    if (s == "triple") return Variant::triple;
    throw std::invalid_argument("unknown variant '" + std::string(s) + "'");
}

/// Freshness and lifetime knobs shared by every principal.
struct Timing {
    std::int64_t freshness_window = 120;
    std::int64_t timer_duration = 30;
    std::int64_t tgt_lifetime = 36000;
    std::int64_t service_lifetime = 3600;
};

}  // namespace kerbtrip
