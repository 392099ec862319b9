#pragma once

/**
 * Shared plumbing: stable hashing, hex digests, error types, timers.
 *
 * Hashes here are used for cache keys, trace/prompt fingerprints and
 * backend-scoped token ids. They must be stable across runs, platforms
 * and thread schedules, so everything is derived from FNV-1a over the
 * byte content (never from pointer values or std::hash).
 */

#include <chrono>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ppcv {

// ----------------------------------------------------------------------------
// Hashing
// ----------------------------------------------------------------------------

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = kFnvOffset) {
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

inline std::string to_hex(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

// 128-bit hex digest built from two independently seeded FNV streams.
// Not cryptographic; collision safety at this scale is handled by the
// cache's payload-integrity check on publish.
inline std::string digest_hex(std::string_view bytes) {
    const std::uint64_t a = fnv1a64(bytes);
    const std::uint64_t b = fnv1a64(bytes, 0x9e3779b97f4a7c15ull);
    return to_hex(a) + to_hex(b);
}

// Backend-scoped token id: stable hash of the token surface form. Using
// content hashes keeps ids identical across runs and threads without a
// shared interner.
using TokenId = std::int64_t;

inline TokenId token_id_of(std::string_view token_text) {
    return static_cast<TokenId>(fnv1a64(token_text));
}

// ----------------------------------------------------------------------------
// Errors
// ----------------------------------------------------------------------------

/// Configuration or capability problem detected before work starts. CLI exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Transport or protocol failure talking to a backend.
struct BackendError : std::runtime_error {
    bool retryable = false;
    explicit BackendError(const std::string& what, bool retryable_ = false)
        : std::runtime_error(what), retryable(retryable_) {}
};

/// Malformed input data (dataset lines, fixture files, stores).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Cache integrity violation (immutability breach, unwritable dir).
struct CacheError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ----------------------------------------------------------------------------
// Timing
// ----------------------------------------------------------------------------

using Clock = std::chrono::steady_clock;

/// Wall-clock stopwatch; seconds() reads elapsed time without stopping.
class Stopwatch {
public:
    Stopwatch() : start_(Clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(Clock::now() - start_).count();
    }
    void reset() { start_ = Clock::now(); }

private:
    Clock::time_point start_;
};

}  // namespace ppcv
