#pragma once

// Little-endian primitives shared by the episode, run and checkpoint formats.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>

namespace delaynet::binary {

template <class T>
    requires std::is_arithmetic_v<T>
void write(std::ostream& out, T value) {
    std::array<char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    out.write(bytes.data(), sizeof(T));
}

template <class T>
    requires std::is_arithmetic_v<T>
T read(std::istream& in) {
    std::array<char, sizeof(T)> bytes;
    if (!in.read(bytes.data(), sizeof(T))) throw std::runtime_error("unexpected end of file");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
}

template <class T>
void write_array(std::ostream& out, std::span<const T> values) {
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(values.data()),
                  static_cast<std::streamsize>(values.size_bytes()));
    } else {
        for (const T& v : values) write(out, v);
    }
}

template <class T>
void read_array(std::istream& in, std::span<T> values) {
    if constexpr (std::endian::native == std::endian::little) {
        if (!in.read(reinterpret_cast<char*>(values.data()),
                     static_cast<std::streamsize>(values.size_bytes()))) {
            throw std::runtime_error("unexpected end of file");
        }
    } else {
        for (T& v : values) v = read<T>(in);
    }
}

inline void write_magic(std::ostream& out, std::string_view magic) {
    out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void expect_magic(std::istream& in, std::string_view magic) {
    std::array<char, 8> buf{};
    if (magic.size() > buf.size() || !in.read(buf.data(), static_cast<std::streamsize>(magic.size())) ||
        std::string_view(buf.data(), magic.size()) != magic) {
        throw std::runtime_error("bad magic, expected " + std::string(magic));
    }
}

} // namespace delaynet::binary
