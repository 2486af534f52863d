// Copyright (C) 2026 The VIST2 Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace vist {

template <class Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatXf = MatX<float>;
using MatXd = MatX<double>;

using TokenId = std::int32_t;
using Index = Eigen::Index;

// ---------------------------------------------------------------------------
// Errors. ConfigError maps to exit code 1 in the CLI, everything else to 2.
// ---------------------------------------------------------------------------

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CapacityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DecodeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct LayoutError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CacheError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Hashing. FNV-1a is used for content checksums (checkpoints, manifests,
// config stamps) and for deriving per-step / per-context seeds.
// ---------------------------------------------------------------------------

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

inline std::uint64_t fnv1a(const void* data, std::size_t size,
                           std::uint64_t state = kFnvOffset) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
        state ^= bytes[i];
        state *= kFnvPrime;
    }
    return state;
}

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t state = kFnvOffset) {
    return fnv1a(s.data(), s.size(), state);
}

inline std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) {
    return fnv1a(&v, sizeof(v), h);
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

// ---------------------------------------------------------------------------
// RNG. The engine is std::mt19937_64 (its sequence is pinned by the
// standard); the distributions are written out explicitly because the
// standard library's distribution sequences are implementation-defined and
// runs must replay bit-exactly, including across a checkpoint resume.
// ---------------------------------------------------------------------------

class Rng {
public:
    Rng() : engine_(0) {}
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n), n >= 1. Rejection-free modulo bias is
    // negligible for the n used here, but rejection keeps it exact.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return v % n;
    }

    int range(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    // Standard normal via Box-Muller, no cached spare (keeps state trivial).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    std::string serialize() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }

    void deserialize(const std::string& s) {
        std::istringstream is(s);
        is >> engine_;
        if (!is) throw CheckpointError("bad RNG state string");
    }

private:
    std::mt19937_64 engine_;
};

// Derives an independent stream for (seed, tag, index); used so that data
// batches are a pure function of the step and resume needs no stream state.
inline Rng stream_rng(std::uint64_t seed, const std::string& tag, std::uint64_t index) {
    std::uint64_t h = hash_combine(hash_combine(fnv1a(tag), seed), index);
    return Rng(h);
}

template <class Scalar>
void fill_normal(MatX<Scalar>& m, Rng& rng, double stddev) {
    for (Index c = 0; c < m.cols(); ++c)
        for (Index r = 0; r < m.rows(); ++r)
            m(r, c) = static_cast<Scalar>(rng.normal() * stddev);
}

}  // namespace vist
