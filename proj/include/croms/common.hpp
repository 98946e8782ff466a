#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace croms {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shape/index violations (mismatched dimensions, out-of-range ids).
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Bad values: empty inputs, NaN scores, negative weights, non-SPD matrices.
class ValueError : public Error {
public:
    using Error::Error;
};

/// A requested computation exceeds its configured cost budget.
class BudgetError : public Error {
public:
    using Error::Error;
};

/// Config-file problems; carries the 1-based line the problem was found on
/// (0 when the problem is not tied to a specific line).
class ConfigError : public Error {
public:
    ConfigError(const std::string& msg, int line_no = 0)
        : Error(line_no > 0 ? "line " + std::to_string(line_no) + ": " + msg : msg),
          line(line_no) {}
    int line;
};

/// SplitMix64 finalizer; used to derive independent replication seeds from a
/// master seed so parallel workers never share a stream.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    return splitmix64(master + (stream + 1) * 0x9E3779B97F4A7C15ULL);
}

/// Deterministic RNG wrapper. Gaussian draws use Box-Muller on raw 64-bit
/// words rather than std::normal_distribution, so the byte-for-byte output
/// contract of the experiment runner does not depend on libstdc++ internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform on [0, 1).
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    /// Uniform on (0, 1]; safe as a log() argument.
    double uniform_pos() {
        return static_cast<double>((gen_() >> 11) + 1) * 0x1.0p-53;
    }

    double normal() {
        const double u1 = uniform_pos();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    /// Uniform integer in [0, k).
    std::uint64_t uniform_index(std::uint64_t k) {
        if (k == 0) throw ValueError("uniform_index: k must be positive");
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % k;
        std::uint64_t v = gen_();
        while (v >= limit) v = gen_();
        return v % k;
    }

    bool bernoulli(double p) { return uniform() < p; }

    Rng fork(std::uint64_t stream) { return Rng(derive_seed(gen_(), stream)); }

private:
    std::mt19937_64 gen_;
};

}  // namespace croms
