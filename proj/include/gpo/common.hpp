#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace gpo {

// Absolute tolerance for probability sum checks throughout the library.
inline constexpr double kProbTolerance = 1e-9;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : Error {
    ParseError(int line_number, const std::string& what)
        : Error("line " + std::to_string(line_number) + ": " + what), line(line_number) {}
    int line;
};

// Updating a belief with an (action, observation) pair of probability zero.
struct ObservationImpossibleError : Error {
    using Error::Error;
};

// The tracked belief support and the environment disagree; indicates a
// simulator/model mismatch.
struct GuardDesyncError : Error {
    using Error::Error;
};

// The set of allowed actions is empty at a guard reached by allowed play.
struct InfeasibilityFault : Error {
    using Error::Error;
};

struct UnknownSupportError : Error {
    using Error::Error;
};

// Rewards differ across states sharing an observation, so a support-level
// reward cannot be defined exactly.
struct RewardAmbiguityError : Error {
    using Error::Error;
};

struct BoundUnavailableError : Error {
    using Error::Error;
};

struct BudgetExceededError : Error {
    using Error::Error;
};

/// Deterministic random source. Draws are mapped to doubles and bounded
/// integers by hand so that sequences depend only on the seed and draw
/// count, never on the standard library's distribution implementations.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n). Requires n > 0.
    std::uint64_t below(std::uint64_t n) {
        std::uint64_t x, r;
        do {
            x = engine_();
            r = x % n;
        } while (x - r > std::numeric_limits<std::uint64_t>::max() - (n - 1));
        return r;
    }

  private:
    std::mt19937_64 engine_;
};

}  // namespace gpo
