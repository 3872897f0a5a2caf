#pragma once

// Little-endian primitive readers/writers shared by the binary file formats
// (checkpoints, raw volumes). Readers throw DataError on truncation.

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "curriseg/errors.hpp"

namespace curriseg::binio {

inline void put_bytes(std::ostream& os, const void* p, size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    put_bytes(os, b, 4);
}

inline void put_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    put_bytes(os, b, 8);
}

inline void put_f64(std::ostream& os, double v) {
    uint64_t u;
    std::memcpy(&u, &v, 8);
    put_u64(os, u);
}

inline void put_f32(std::ostream& os, float v) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32(os, u);
}

inline void put_string(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<uint32_t>(s.size()));
    put_bytes(os, s.data(), s.size());
}

inline void get_bytes(std::istream& is, void* p, size_t n, const char* what) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(is.gcount()) != n)
        throw DataError(std::string("truncated file while reading ") + what);
}

inline uint32_t get_u32(std::istream& is, const char* what) {
    unsigned char b[4];
    get_bytes(is, b, 4, what);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline uint64_t get_u64(std::istream& is, const char* what) {
    unsigned char b[8];
    get_bytes(is, b, 8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

inline double get_f64(std::istream& is, const char* what) {
    uint64_t u = get_u64(is, what);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

inline float get_f32(std::istream& is, const char* what) {
    uint32_t u = get_u32(is, what);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

inline std::string get_string(std::istream& is, const char* what, uint32_t max_len = 1u << 20) {
    uint32_t len = get_u32(is, what);
    if (len > max_len) throw DataError(std::string("implausible string length while reading ") + what);
    std::string s(len, '\0');
    if (len) get_bytes(is, s.data(), len, what);
    return s;
}

inline void put_f64_array(std::ostream& os, const std::vector<double>& v) {
    for (double x : v) put_f64(os, x);
}

inline std::vector<double> get_f64_array(std::istream& is, uint64_t count, const char* what) {
    std::vector<double> v(count);
    for (auto& x : v) x = get_f64(is, what);
    return v;
}

}  // namespace curriseg::binio
