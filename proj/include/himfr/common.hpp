#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace himfr {

// Error taxonomy. The CLI maps these onto process exit codes:
// usage -> 1, data/input/shape -> 2, checkpoint/version -> 3.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InputError : public Error {
public:
    using Error::Error;
};

class ShapeError : public InputError {
public:
    using InputError::InputError;
};

class GeometryError : public InputError {
public:
    using InputError::InputError;
};

class DataError : public InputError {
public:
    using InputError::InputError;
};

class IoError : public InputError {
public:
    using InputError::InputError;
};

class CheckpointError : public Error {
public:
    using Error::Error;
};

/// Deterministic 64-bit RNG used everywhere randomness is needed.
using Rng = std::mt19937_64;

/// Mixes a base seed with a stream index so sub-streams are independent
/// but fully reproducible (splitmix64 finalizer).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// FNV-1a 64-bit running hash; used for checkpoint integrity and
/// frozen-parameter checks.
struct Fnv1a64 {
    std::uint64_t state = 0xcbf29ce484222325ULL;

    void update(const void* bytes, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(bytes);
        for (std::size_t i = 0; i < n; ++i) {
            state ^= p[i];
            state *= 0x100000001b3ULL;
        }
    }

    std::uint64_t digest() const { return state; }
};

inline std::uint64_t fnv1a64(const void* bytes, std::size_t n) {
    Fnv1a64 h;
    h.update(bytes, n);
    return h.digest();
}

/// Global default seed, overridable through the HIMFR_SEED environment
/// variable. Commands fall back to this when no --seed is given.
std::uint64_t default_seed();

void log_warning(const std::string& msg);

}  // namespace himfr
