#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cplab {

// Structural problem: incompatible shapes, malformed graphs.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite value produced during a forward pass.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Caller violated an operation's precondition.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid or inconsistent configuration.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// FNV-1a, used for content hashes and labeled sub-seed derivation.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a(s.data(), s.size(), h);
}

// Deterministic sub-seed for a labeled purpose ("data", "init", "mask", ...).
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view label) {
    std::uint64_t h = fnv1a(&base, sizeof(base));
    return fnv1a(label, h);
}

// Unicode scalar values in a UTF-8 string (continuation bytes not counted).
inline std::uint64_t count_unicode_scalars(std::string_view s) {
    std::uint64_t n = 0;
    for (unsigned char c : s) {
        if ((c & 0xC0) != 0x80) ++n;
    }
    return n;
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

}  // namespace cplab
