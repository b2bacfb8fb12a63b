#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

namespace ppde {

// Dense storage shared by every module. Row-major so that one row of a batch
// is one contiguous sample (a flattened path prefix, a weight matrix, ...).
template <typename Real>
using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using Vector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
template <typename Real>
using RowVector = Eigen::Matrix<Real, 1, Eigen::Dynamic>;

/// Raised when a computation produces NaN/Inf where finiteness is required.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Precision { f32, f64 };

Precision parse_precision(const std::string& name);
std::string to_string(Precision precision);

/// Philox4x32-10 counter-based generator.
///
/// A stream is identified by (seed, stream id); draws advance a 64-bit block
/// counter. `split` derives an independent child stream deterministically, so
/// work can be handed to parallel workers without changing any sample.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

    RngStream split(std::uint64_t child) const;

    std::uint32_t next_u32();
    std::uint64_t next_u64();
    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi);
    /// Standard normal via Box-Muller (pairs are cached).
    double normal();

    static std::array<std::uint32_t, 4> philox(std::array<std::uint32_t, 4> counter,
                                               std::array<std::uint32_t, 2> key);

private:
    void refill();

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> buffer_{};
    int buffered_ = 0;
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

/// rows x cols matrix of i.i.d. N(0, stddev^2) entries, filled row by row.
template <typename Real>
Matrix<Real> gaussian_matrix(RngStream& rng, Eigen::Index rows, Eigen::Index cols, double stddev);

struct SummaryStats {
    double mean = 0.0;
    double stdev = 0.0;
};

/// Mean and sample standard deviation (divisor n-1).
SummaryStats summary_stats(std::span<const double> values);

/// Mean of |estimate - reference| / |reference|.
double relative_l1_error(std::span<const double> estimates, double reference);

}  // namespace ppde
