#pragma once

#include "ppde/paths.hpp"

#include <functional>
#include <string>
#include <vector>

namespace ppde {

/// linear: F depends on y only, so only the Y regression is needed.
enum class GeneratorKind { linear, fully_nonlinear };

/// A path-dependent PDE
///   d_t u + b . d_w u + 1/2 sigma sigma^T : d_ww u + F(t, w, u, z, gamma) = 0,
///   u(T, w) = g(w),
/// where z and gamma are the sigma-scaled first and second derivatives.
/// All callbacks receive the known path prefix (one grid point per row).
template <typename Real>
struct ProblemSpec {
    using VectorFn = std::function<void(double t, PathRef<Real> path, const TimeGrid& grid,
                                        Eigen::Ref<RowVector<Real>> out)>;
    using GeneratorFn = std::function<Real(
        double t, PathRef<Real> path, const TimeGrid& grid, Real y,
        const Eigen::Ref<const RowVector<Real>>& z, const Eigen::Ref<const Matrix<Real>>& gamma)>;
    using TerminalFn = std::function<Real(PathRef<Real> path, const TimeGrid& grid)>;

    std::string name;
    int dim = 1;
    Vector<Real> x0;
    double horizon = 0.0;
    GeneratorKind kind = GeneratorKind::linear;
    DiffusionKind diffusion_kind = DiffusionKind::diagonal;

    VectorFn drift;      // writes d values
    VectorFn diffusion;  // writes d (diagonal) or d*d (full, row-major) values
    GeneratorFn generator;
    TerminalFn terminal;

    bool fully_nonlinear() const { return kind == GeneratorKind::fully_nonlinear; }
};

/// Drift and variance bounds of the zero-sum game.
struct GameParams {
    double mu_low = -0.2;
    double mu_high = 0.2;
    double a_low = 0.04;
    double a_high = 0.09;

    void validate() const;
};

struct OptionParams {
    double discount_rate = 0.01;      // r0
    std::vector<double> rates;        // r_i
    std::vector<double> volatilities; // sigma_i
    double strike = 0.7;
    double barrier = 1.2;

    /// Same rate and volatility for every asset.
    static OptionParams uniform(int dim, double rate = 0.01, double volatility = 0.1,
                                double strike = 0.7, double barrier = 1.2,
                                double discount_rate = 0.01);
    void validate(int dim) const;
};

/// Overridable settings of the three named benchmark problems.
struct ProblemParams {
    double horizon = 0.1;
    GameParams game;
    double option_rate = 0.01;
    double option_volatility = 0.1;
    double strike = 0.7;
    double barrier = 1.2;
    double discount_rate = 0.01;
};

// Game generator:
//   F = min_mu mu (1.z) / sqrt(a_low) + max_a a tr(gamma) / (2 a_low)
//       + f(t, w_t, int_0^t w) - tr(gamma) / 2
template <typename Real>
Real game_generator(const GameParams& params, double t, PathRef<Real> path,
                    const TimeGrid& grid, const Eigen::Ref<const RowVector<Real>>& z,
                    const Eigen::Ref<const Matrix<Real>>& gamma);

/// The running cost f(t, x, y) of the game at state x = w_t, y = int_0^t w.
template <typename Real>
Real game_running_cost(const GameParams& params, const RowVector<Real>& state,
                       const RowVector<Real>& integral);

/// cos of the cross-dimension mean of (w_t + int_0^t w ds).
template <typename Real>
Real game_exact_solution(PathRef<Real> path, const TimeGrid& grid);

/// ((1/(T d)) sum_i int_0^T w^i ds - K)^+ on the full grid.
template <typename Real>
Real asian_payoff(PathRef<Real> path, const TimeGrid& grid, double strike);

/// (mean(w_T) - K)^+ if the discretely monitored max of the basket mean
/// stays below B, else 0.
template <typename Real>
Real barrier_payoff(PathRef<Real> path, double strike, double barrier);

template <typename Real>
Real linear_generator(Real y, double discount_rate) {
    return static_cast<Real>(-discount_rate) * y;
}

template <typename Real>
ProblemSpec<Real> make_control_problem(int dim, const GameParams& params, double horizon = 0.1);
template <typename Real>
ProblemSpec<Real> make_asian_problem(int dim, const OptionParams& params, double horizon = 0.1);
template <typename Real>
ProblemSpec<Real> make_barrier_problem(int dim, const OptionParams& params, double horizon = 0.1);

/// ControlProblem | AsianOption | BarrierOption.
template <typename Real>
ProblemSpec<Real> make_problem(const std::string& name, int dim, const ProblemParams& params);

bool is_known_problem(const std::string& name);

/// Construction-time checks: diffusion evaluations invertible on sampled
/// states, and linear generators constant in (z, gamma) under perturbation.
template <typename Real>
void check_problem(const ProblemSpec<Real>& problem, const TimeGrid& grid, RngStream& rng,
                   int samples = 16);

template <typename Real>
Matrix<Real> evaluate_drift(const ProblemSpec<Real>& problem, const PathBatch<Real>& batch);
template <typename Real>
DiffusionEval<Real> evaluate_diffusion(const ProblemSpec<Real>& problem,
                                       const PathBatch<Real>& batch);

template <typename Real>
struct SimulatedBatch {
    PathBatch<Real> paths;
    Matrix<Real> last_increments;  // B_h of the final Euler step
};

/// Euler simulation of `steps` >= 1 steps from x0 for `batch` samples.
template <typename Real>
SimulatedBatch<Real> simulate(const ProblemSpec<Real>& problem, const TimeGrid& grid,
                              Eigen::Index batch, int steps, RngStream& rng);

}  // namespace ppde
