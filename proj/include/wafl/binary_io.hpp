#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "wafl/error.hpp"

namespace wafl::binio {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

inline void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void write_f32(std::ostream& os, float v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void write_bytes(std::ostream& os, std::string_view bytes) {
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline void write_string(std::ostream& os, std::string_view s) {
    write_u32(os, static_cast<std::uint32_t>(s.size()));
    write_bytes(os, s);
}

inline void read_exact(std::istream& is, char* dst, std::size_t n) {
    is.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n) {
        throw Error(ErrorCode::FormatError, "unexpected end of file");
    }
}

inline std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v;
    read_exact(is, reinterpret_cast<char*>(&v), sizeof v);
    return v;
}

inline float read_f32(std::istream& is) {
    float v;
    read_exact(is, reinterpret_cast<char*>(&v), sizeof v);
    return v;
}

inline std::string read_bytes(std::istream& is, std::size_t n) {
    std::string s(n, '\0');
    if (n > 0) read_exact(is, s.data(), n);
    return s;
}

inline std::string read_string(std::istream& is, std::size_t max_len = 1u << 20) {
    const auto n = read_u32(is);
    if (n > max_len) throw Error(ErrorCode::FormatError, "string length out of range");
    return read_bytes(is, n);
}

}  // namespace wafl::binio
