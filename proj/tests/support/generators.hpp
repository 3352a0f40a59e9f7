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

#include <random>
#include <string>

#include "kerbtrip/codec.hpp"

namespace kerbtrip::testing {

/// Random well-formed values for codec property tests.
class MessageGen {
public:
    explicit MessageGen(std::uint64_t seed) : gen_(seed), nonces_(NonceSource::counter(seed)) {}

    std::string name() {
        static constexpr char alphabet[] = "abcdefghijklmnopqrstuvwxyz0123456789.-_:";
        auto len = 1 + gen_() % 24;
        std::string s;
        for (std::size_t i = 0; i < len; ++i) s.push_back(alphabet[gen_() % (sizeof alphabet - 1)]);
        return s;
    }
    PrincipalId principal() { return PrincipalId(name()); }
    NetworkAddress address() { return NetworkAddress(name()); }
    Lifetime lifetime() {
        auto start = static_cast<Timestamp>(gen_() % 1'000'000) - 500'000;
        return Lifetime(start, start + static_cast<Timestamp>(gen_() % 100'000));
    }
    SealedBox box() {
        Bytes key(32);
        for (auto& b : key) b = static_cast<std::uint8_t>(gen_());
        Bytes plain(gen_() % 200);
        for (auto& b : plain) b = static_cast<std::uint8_t>(gen_());
        return seal(SymmetricKey::from_bytes(key, KeyOrigin::session), plain, nonces_);
    }
    AlertPayload alert() {
        return {principal(), address(), principal(), gen_() % 2 ? Incident::timeout : Incident::bad_password};
    }

    /// A random message of the variant at `index` in kerbtrip::Message.
    Message message(std::size_t index) { return make<0>(index); }

    std::size_t variants() const { return std::variant_size_v<Message>; }

private:
    template <typename T>
    T fill() {
        if constexpr (requires(T m) { m.requested; })
            return T{principal(), principal(), gen_(), lifetime()};
        else if constexpr (requires(T m) { m.ticket; m.client; })
            return T{principal(), {box()}, box()};
        else if constexpr (requires(T m) { m.target_v; })
            return T{{box()}, principal(), gen_(), {box()}};
        else if constexpr (requires(T m) { m.authenticator; })
            return T{{box()}, {box()}};
        else if constexpr (requires(T m) { m.client; m.enc; })
            return T{principal(), box()};
        else if constexpr (requires(T m) { m.alert; })
            return T{alert()};
        else
            return T{box()};
    }

    template <std::size_t I>
    Message make(std::size_t index) {
        if constexpr (I == std::variant_size_v<Message>) {
            throw std::out_of_range("variant index");
        } else {
            if (I == index) return Message(std::in_place_index<I>, fill<std::variant_alternative_t<I, Message>>());
            return make<I + 1>(index);
        }
    }

    std::mt19937_64 gen_;
    NonceSource nonces_;
};

}  // namespace kerbtrip::testing
