#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "comil/errors.hpp"

namespace comil {

// Little-endian byte encoder for the binary container formats.
class ByteWriter {
public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void magic(const char tag[5]) {
        bytes_.insert(bytes_.end(), tag, tag + 4);
    }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes_.insert(bytes_.end(), s.begin(), s.end());
    }
    const std::vector<std::uint8_t>& bytes() const { return bytes_; }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

// Matching decoder; any truncation or tag mismatch raises FormatError carrying
// the byte offset of the failure.
class ByteReader {
public:
    explicit ByteReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    std::uint32_t u32() {
        need(4, "u32");
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8, "u64");
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    void expect_magic(const char tag[5]) {
        need(4, "magic");
        if (std::memcmp(bytes_.data() + pos_, tag, 4) != 0)
            throw FormatError("bad magic at offset " + std::to_string(pos_) +
                              ", expected \"" + std::string(tag, 4) + "\"");
        pos_ += 4;
    }
    std::string str() {
        const std::uint32_t n = u32();
        need(n, "string body");
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    bool at_end() const { return pos_ == bytes_.size(); }
    std::size_t offset() const { return pos_; }

    void expect_end() const {
        if (!at_end())
            throw FormatError("trailing bytes at offset " + std::to_string(pos_));
    }

private:
    void need(std::size_t n, const char* what) const {
        if (pos_ + n > bytes_.size())
            throw FormatError("truncated input at offset " + std::to_string(pos_) +
                              " reading " + what);
    }

    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

} // namespace comil
