#pragma once

#include <charconv>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ossa {

// splitmix64: tiny, well-mixed 64-bit generator. One instance per sample slot
// keeps generation order-independent under parallelism.
struct RngStream {
    uint64_t state;

    explicit RngStream(uint64_t seed) : state(seed) {}

    static uint64_t mix(uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    uint64_t next_u64() {
        state += 0x9e3779b97f4a7c15ULL;
        uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1) with 53-bit resolution
    double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // index into {0, 1, ..., n-1}
    size_t next_index(size_t n) { return size_t(next_double() * double(n)) % n; }
};

// stream keyed on (master seed, slot, attempt); all three mixed so adjacent
// slots share no state
inline RngStream derive_stream(uint64_t master, uint64_t slot, uint64_t attempt) {
    uint64_t s = RngStream::mix(master);
    s = RngStream::mix(s ^ (0x517cc1b727220a95ULL + slot));
    s = RngStream::mix(s ^ (0x2545f4914f6cdd1dULL + attempt));
    return RngStream(s);
}

// FNV-1a over bytes; used for network/layout fingerprints
struct Fnv1a {
    uint64_t h = 0xcbf29ce484222325ULL;
    void add_bytes(const void* data, size_t n) {
        const unsigned char* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 0x100000001b3ULL;
        }
    }
    void add(std::string_view s) { add_bytes(s.data(), s.size()); }
    void add(double d) { add_bytes(&d, sizeof d); }
    void add(int64_t v) { add_bytes(&v, sizeof v); }
    std::string hex() const {
        char buf[17];
        static const char* digits = "0123456789abcdef";
        for (int i = 0; i < 16; ++i) buf[i] = digits[(h >> (60 - 4 * i)) & 0xf];
        buf[16] = '\0';
        return std::string(buf);
    }
};

// shortest round-trip decimal form; keeps CSV output byte-stable
inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc())
        throw std::runtime_error("format_double: to_chars failed");
    return std::string(buf, ptr);
}

inline double parse_double(std::string_view s) {
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw std::runtime_error("parse_double: bad number '" + std::string(s) + "'");
    return v;
}

}  // namespace ossa
