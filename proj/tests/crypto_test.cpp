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

#include <random>

#include "kerbtrip/crypto.hpp"

namespace kerbtrip {
namespace {

// Digests computed with Python's hashlib over
// password || 00 || principal || 00 || index.
constexpr const char* kPwAlice1 = "a0efd1468a24108201e6e430045333ea426aa283c100e89c4a298acf96b62245";
constexpr const char* kPwAlice2 = "9c99634d3f91221cefb914c6b4dee4073fe844698829cf4b09707b3e8b525d79";
constexpr const char* kPwAlice3 = "4489e716246c908352d688a27d6e9e5f1668562faa79204c4b66a317ef28da75";

const PrincipalId alice{"alice"};

Bytes random_bytes(std::mt19937_64& gen, std::size_t n) {
    Bytes b(n);
    for (auto& x : b) x = static_cast<std::uint8_t>(gen());
    return b;
}

TEST(DeriveKey, MatchesIndependentSha256Vector) {
    EXPECT_EQ(derive_key("pw", alice, 1).hex(), kPwAlice1);
    EXPECT_EQ(derive_key("pw", alice, 2).hex(), kPwAlice2);
    EXPECT_EQ(derive_key("pw", alice, 3).hex(), kPwAlice3);
}

TEST(DeriveKey, DeterministicAndIndexSeparated) {
    EXPECT_EQ(derive_key("pw", alice, 1), derive_key("pw", alice, 1));
    EXPECT_NE(derive_key("pw", alice, 1), derive_key("pw", alice, 2));
    EXPECT_EQ(derive_key("pw", alice, 1).origin, KeyOrigin::password_derived);
}

TEST(DeriveKey, PrincipalSeparates) {
    EXPECT_NE(derive_key("pw", alice, 1), derive_key("pw", PrincipalId("bob"), 1));
}

TEST(DeriveKey, RejectsEmptyPasswordAndBadIndex) {
    EXPECT_THROW(derive_key("", alice, 1), InvalidPassword);
    EXPECT_THROW(derive_key("pw", alice, 0), std::invalid_argument);
    EXPECT_THROW(derive_key("pw", alice, 4), std::invalid_argument);
}

TEST(Seal, RoundTrip) {
    auto nonces = NonceSource::counter(1);
    auto k = derive_key("pw", alice, 1);
    EXPECT_EQ(open(k, seal(k, to_bytes("m"), nonces)), to_bytes("m"));
    EXPECT_EQ(open(k, seal(k, to_bytes("ticket"), nonces)), to_bytes("ticket"));
}

TEST(Seal, EmptyPlaintext) {
    auto nonces = NonceSource::counter(1);
    auto k = derive_key("pw", alice, 1);
    auto box = seal(k, {}, nonces);
    EXPECT_TRUE(box.ciphertext.empty());
    EXPECT_TRUE(open(k, box).empty());
}

TEST(Seal, WrongKeyRejected) {
    auto nonces = NonceSource::counter(1);
    auto box = seal(derive_key("pw", alice, 1), to_bytes("m"), nonces);
    EXPECT_THROW(open(derive_key("pw", alice, 2), box), AuthenticationFailure);
}

TEST(Seal, CounterNoncesNeverRepeat) {
    auto a = NonceSource::counter(1);
    auto b = NonceSource::counter(2);
    auto a1 = a.next();
    EXPECT_NE(a1, a.next());
    EXPECT_NE(a1, b.next());
}

TEST(Seal, BitFlipAnywhereInA64ByteBoxFails) {
    auto nonces = NonceSource::counter(9);
    auto k = derive_key("pw", alice, 1);
    auto box = seal(k, Bytes(24, 0x5A), nonces);
    auto wire = box.serialize();
    ASSERT_EQ(wire.size(), 64u);
    for (std::size_t i = 0; i < wire.size(); ++i) {
        for (int bit = 0; bit < 8; ++bit) {
            auto bad = wire;
            bad[i] ^= static_cast<std::uint8_t>(1u << bit);
            EXPECT_THROW(open(k, SealedBox::parse(bad)), AuthenticationFailure) << "byte " << i << " bit " << bit;
        }
    }
}

TEST(SealProperty, RoundTripAndWrongKeyOverRandomInputs) {
    std::mt19937_64 gen(20261018);
    auto rng = RandomSource::seeded(77);
    auto nonces = NonceSource::counter(3);
    for (int i = 0; i < 200; ++i) {
        auto len = static_cast<std::size_t>(gen() % (64 * 1024 + 1));
        auto m = random_bytes(gen, len);
        auto k = gen_session_key(rng);
        auto other = gen_session_key(rng);
        ASSERT_NE(k, other);
        auto box = seal(k, m, nonces);
        ASSERT_EQ(open(k, box), m);
        ASSERT_THROW(open(other, box), AuthenticationFailure);
    }
}

TEST(SessionKey, SeededSequencesAreReproducible) {
    auto a = RandomSource::seeded(7);
    auto b = RandomSource::seeded(7);
    auto a1 = gen_session_key(a);
    EXPECT_EQ(a1, gen_session_key(b));
    EXPECT_NE(a1, gen_session_key(a));
    auto c = RandomSource::seeded(8);
    EXPECT_NE(a1, gen_session_key(c));
    EXPECT_EQ(a1.origin, KeyOrigin::session);
}

TEST(SessionKey, SystemSourceDiffers) {
    auto s = RandomSource::system();
    EXPECT_NE(gen_session_key(s), gen_session_key(s));
}

}  // namespace
}  // namespace kerbtrip
