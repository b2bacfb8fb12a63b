#include "ppde/tensor.hpp"

#include <cmath>
#include <numbers>

namespace ppde {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

}  // namespace

Precision parse_precision(const std::string& name) {
    if (name == "f64") return Precision::f64;
    if (name == "f32") return Precision::f32;
    throw std::invalid_argument("unknown precision '" + name + "' (expected f32 or f64)");
}

std::string to_string(Precision precision) {
    return precision == Precision::f32 ? "f32" : "f64";
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

RngStream RngStream::split(std::uint64_t child) const {
    return RngStream(seed_, splitmix64(stream_ ^ splitmix64(child + 1)));
}

std::array<std::uint32_t, 4> RngStream::philox(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += kPhiloxW0;
            key[1] += kPhiloxW1;
        }
        const std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM0) * ctr[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM1) * ctr[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
}

void RngStream::refill() {
    const std::array<std::uint32_t, 4> ctr{
        static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
        static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
    const std::array<std::uint32_t, 2> key{static_cast<std::uint32_t>(seed_),
                                           static_cast<std::uint32_t>(seed_ >> 32)};
    buffer_ = philox(ctr, key);
    buffered_ = 4;
    ++block_;
}

std::uint32_t RngStream::next_u32() {
    if (buffered_ == 0) refill();
    return buffer_[4 - buffered_--];
}

std::uint64_t RngStream::next_u64() {
    const std::uint64_t hi = next_u32();
    const std::uint64_t lo = next_u32();
    return (hi << 32) | lo;
}

double RngStream::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

double RngStream::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_normal_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_normal_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

template <typename Real>
Matrix<Real> gaussian_matrix(RngStream& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
    if (!(stddev >= 0.0)) {
        throw std::invalid_argument("gaussian_matrix: stddev must be non-negative");
    }
    if (rows < 0 || cols < 0) {
        throw std::invalid_argument("gaussian_matrix: negative shape");
    }
    Matrix<Real> out(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            out(r, c) = static_cast<Real>(stddev * rng.normal());
        }
    }
    return out;
}

template Matrix<float> gaussian_matrix<float>(RngStream&, Eigen::Index, Eigen::Index, double);
template Matrix<double> gaussian_matrix<double>(RngStream&, Eigen::Index, Eigen::Index, double);

SummaryStats summary_stats(std::span<const double> values) {
    if (values.size() < 2) {
        throw std::invalid_argument("summary_stats: need at least 2 values");
    }
    // Shifted by the first value: constant input gives mean == value exactly.
    const double shift = values.front();
    double sum = 0.0;
    for (double v : values) {
        if (!std::isfinite(v)) throw std::invalid_argument("summary_stats: non-finite value");
        sum += v - shift;
    }
    const auto n = static_cast<double>(values.size());
    const double mean = shift + sum / n;
    double squares = 0.0;
    for (double v : values) squares += (v - mean) * (v - mean);
    return {mean, std::sqrt(squares / (n - 1.0))};
}

double relative_l1_error(std::span<const double> estimates, double reference) {
    if (reference == 0.0) throw std::invalid_argument("relative_l1_error: reference is zero");
    if (estimates.empty()) throw std::invalid_argument("relative_l1_error: no estimates");
    double total = 0.0;
    for (double e : estimates) total += std::abs(e - reference) / std::abs(reference);
    return total / static_cast<double>(estimates.size());
}

}  // namespace ppde
