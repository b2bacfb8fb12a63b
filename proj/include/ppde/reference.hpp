#pragma once

#include "ppde/problems.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ppde {

struct McConfig {
    long long samples = 1'000'000;
    double step = 0.01;  // monitoring / quadrature grid
    std::uint64_t seed = 0;
    bool antithetic = false;
    long long chunk = 1 << 16;
    /// 0: PPDE_THREADS if set, else the hardware concurrency.
    int threads = 0;
};

struct McEstimate {
    double price = 0.0;
    double standard_error = 0.0;
    long long samples = 0;
};

/// european: the basket call without averaging or barrier (comparison only).
enum class OptionPayoff { asian, barrier, european };

/// Every discounted payoff in sample order (single-threaded).
std::vector<double> mc_discounted_payoffs(OptionPayoff kind, int dim, const OptionParams& params,
                                          double horizon, const McConfig& config);

/// Mean and standard error over `config.samples` exact-GBM paths. Volatility
/// 0 is allowed and gives deterministic paths.
McEstimate mc_price(OptionPayoff kind, int dim, const OptionParams& params, double horizon,
                    const McConfig& config);

/// Discounted Asian basket price under exact geometric Brownian motion,
/// sampled on the grid of `config.step` with the same trapezoid average as
/// the solver's payoff.
McEstimate mc_price_asian(int dim, const OptionParams& params, double horizon,
                          const McConfig& config);

/// Discounted up-and-out basket call; the barrier is checked on the grid.
McEstimate mc_price_barrier(int dim, const OptionParams& params, double horizon,
                            const McConfig& config);

/// The game's value at (0, 0) is cos(0) = 1 in every dimension.
inline double control_reference(int /*dim*/) { return 1.0; }

/// JSON file of previously computed oracle prices, keyed by everything that
/// changes the estimate.
class OracleCache {
public:
    OracleCache() = default;
    explicit OracleCache(std::filesystem::path path);

    static std::string key(const std::string& problem, int dim, const ProblemParams& params,
                           const McConfig& config);

    std::optional<McEstimate> find(const std::string& key) const;
    void store(const std::string& key, const McEstimate& estimate);
    /// Writes the file (no-op without a path).
    void save() const;

private:
    std::filesystem::path path_;
    std::map<std::string, McEstimate> entries_;
};

/// Reference value of a named problem: exact for the game, Monte Carlo for
/// the options (looked up in / added to `cache` when given).
McEstimate reference_value(const std::string& problem, int dim, const ProblemParams& params,
                           const McConfig& config, OracleCache* cache = nullptr);

/// Worker count from PPDE_THREADS, falling back to the hardware concurrency.
int default_thread_count();

}  // namespace ppde
