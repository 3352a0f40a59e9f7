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

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace kerbtrip {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CodecError : public Error {
public:
    enum class Kind { BadMagic, UnknownType, Truncated, TrailingGarbage, Malformed };

    CodecError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

inline const char* to_string(CodecError::Kind kind) {
    switch (kind) {
        case CodecError::Kind::BadMagic: return "BadMagic";
        case CodecError::Kind::UnknownType: return "UnknownType";
        case CodecError::Kind::Truncated: return "Truncated";
        case CodecError::Kind::TrailingGarbage: return "TrailingGarbage";
        case CodecError::Kind::Malformed: return "Malformed";
    }
    return "?";
}

inline Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

inline std::string to_hex(ByteView data) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(data.size() * 2);
    for (auto b : data) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0x0F]);
    }
    return out;
}

/// Throws std::invalid_argument on odd length or a non-hex digit.
inline Bytes from_hex(std::string_view hex) {
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    if (hex.size() % 2 != 0) throw std::invalid_argument("hex string has odd length");
    Bytes out(hex.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        int hi = nibble(hex[2 * i]);
        int lo = nibble(hex[2 * i + 1]);
        if (hi < 0 || lo < 0) throw std::invalid_argument("invalid hex digit");
        out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
    }
    return out;
}

/// Big-endian writer for the wire format.
class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v) { put_be(v, 2); }
    void u32(std::uint32_t v) { put_be(v, 4); }
    void u64(std::uint64_t v) { put_be(v, 8); }
    void i64(std::int64_t v) { put_be(static_cast<std::uint64_t>(v), 8); }

    void raw(ByteView data) { buf_.insert(buf_.end(), data.begin(), data.end()); }

    /// 2-byte length prefix.
    void str(std::string_view s) {
        if (s.size() > 0xFFFF) throw std::length_error("string field exceeds 65535 bytes");
        u16(static_cast<std::uint16_t>(s.size()));
        buf_.insert(buf_.end(), s.begin(), s.end());
    }

    /// 4-byte length prefix.
    void blob(ByteView data) {
        u32(static_cast<std::uint32_t>(data.size()));
        raw(data);
    }

    const Bytes& bytes() const& { return buf_; }
    Bytes take() && { return std::move(buf_); }

private:
    void put_be(std::uint64_t v, int width) {
        for (int shift = (width - 1) * 8; shift >= 0; shift -= 8)
            buf_.push_back(static_cast<std::uint8_t>(v >> shift));
    }

    Bytes buf_;
};

/// Reads what ByteWriter writes; running past the end raises CodecError::Truncated.
class ByteReader {
public:
    explicit ByteReader(ByteView data) : data_(data) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(get_be(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(get_be(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get_be(4)); }
    std::uint64_t u64() { return get_be(8); }
    std::int64_t i64() { return static_cast<std::int64_t>(get_be(8)); }

    ByteView raw(std::size_t n) {
        need(n);
        auto out = data_.subspan(pos_, n);
        pos_ += n;
        return out;
    }

    std::string str() {
        auto n = u16();
        auto v = raw(n);
        return std::string(v.begin(), v.end());
    }

    Bytes blob() {
        auto n = u32();
        auto v = raw(n);
        return Bytes(v.begin(), v.end());
    }

    std::size_t remaining() const noexcept { return data_.size() - pos_; }
    bool done() const noexcept { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (remaining() < n) throw CodecError(CodecError::Kind::Truncated, "field runs past end of payload");
    }

    std::uint64_t get_be(int width) {
        need(static_cast<std::size_t>(width));
        std::uint64_t v = 0;
        for (int i = 0; i < width; ++i) v = (v << 8) | data_[pos_ + i];
        pos_ += static_cast<std::size_t>(width);
        return v;
    }

    ByteView data_;
    std::size_t pos_ = 0;
};

}  // namespace kerbtrip
