#pragma once

// Little-endian primitive encoding shared by the dataset and checkpoint formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "densityscan/errors.hpp"

namespace densityscan::detail {

template <class T>
void put(std::string& buf, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    if constexpr (sizeof(T) == 8 && std::is_floating_point_v<T>) {
        put(buf, std::bit_cast<std::uint64_t>(value));
    } else if constexpr (sizeof(T) == 4 && std::is_floating_point_v<T>) {
        put(buf, std::bit_cast<std::uint32_t>(value));
    } else {
        for (std::size_t i = 0; i < sizeof(T); ++i)
            buf.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
    }
}

class Reader {
public:
    Reader(const std::string& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

    template <class T>
    T get() {
        if constexpr (sizeof(T) == 8 && std::is_floating_point_v<T>) {
            return std::bit_cast<T>(get<std::uint64_t>());
        } else if constexpr (sizeof(T) == 4 && std::is_floating_point_v<T>) {
            return std::bit_cast<T>(get<std::uint32_t>());
        } else {
            need(sizeof(T));
            std::uint64_t v = 0;
            for (std::size_t i = 0; i < sizeof(T); ++i)
                v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
            pos_ += sizeof(T);
            return static_cast<T>(v);
        }
    }

    std::string get_bytes(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw ParseError(source_, pos_, "truncated data");
    }
    [[noreturn]] void fail(const std::string& what) const { throw ParseError(source_, pos_, what); }

    std::size_t pos() const { return pos_; }
    void seek(std::size_t p) { pos_ = p; }
    bool at_end() const { return pos_ == bytes_.size(); }

private:
    const std::string& bytes_;
    std::string source_;
    std::size_t pos_ = 0;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace densityscan::detail
