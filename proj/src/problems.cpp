#include "ppde/problems.hpp"

#include <algorithm>
#include <cmath>

namespace ppde {

void GameParams::validate() const {
    if (!(mu_low <= mu_high)) throw std::invalid_argument("GameParams: mu_low > mu_high");
    if (!(a_low > 0.0) || !(a_low <= a_high)) {
        throw std::invalid_argument("GameParams: need 0 < a_low <= a_high");
    }
}

OptionParams OptionParams::uniform(int dim, double rate, double volatility, double strike,
                                   double barrier, double discount_rate) {
    OptionParams p;
    p.discount_rate = discount_rate;
    p.rates.assign(static_cast<std::size_t>(dim), rate);
    p.volatilities.assign(static_cast<std::size_t>(dim), volatility);
    p.strike = strike;
    p.barrier = barrier;
    return p;
}

void OptionParams::validate(int dim) const {
    if (rates.size() != static_cast<std::size_t>(dim) ||
        volatilities.size() != static_cast<std::size_t>(dim)) {
        throw std::invalid_argument("OptionParams: need one rate and volatility per asset");
    }
    for (double v : volatilities) {
        if (!(v > 0.0)) throw std::invalid_argument("OptionParams: volatilities must be > 0");
    }
}

template <typename Real>
Real game_running_cost(const GameParams& p, const RowVector<Real>& state,
                       const RowVector<Real>& integral) {
    const double d = static_cast<double>(state.size());
    const double mean_state = static_cast<double>(state.mean());
    const double phase = static_cast<double>((state + integral).mean());
    const double s = std::sin(phase);
    const double c = std::cos(phase);
    const double value = (mean_state + p.mu_high) * std::max(s, 0.0) -
                         (mean_state + p.mu_low) * std::max(-s, 0.0) +
                         p.a_low / (2.0 * d) * std::max(c, 0.0) -
                         p.a_high / (2.0 * d) * std::max(-c, 0.0);
    return static_cast<Real>(value);
}

template <typename Real>
Real game_generator(const GameParams& p, double /*t*/, PathRef<Real> path, const TimeGrid& grid,
                    const Eigen::Ref<const RowVector<Real>>& z,
                    const Eigen::Ref<const Matrix<Real>>& gamma) {
    const Eigen::Index d = path.cols();
    if (z.size() != d || gamma.rows() != d || gamma.cols() != d) {
        throw std::invalid_argument("game_generator: z/gamma shape mismatch");
    }
    for (Eigen::Index a = 0; a < d; ++a) {
        for (Eigen::Index b = a + 1; b < d; ++b) {
            if (std::abs(static_cast<double>(gamma(a, b) - gamma(b, a))) > 1e-9) {
                throw std::invalid_argument("game_generator: gamma is not symmetric");
            }
        }
    }
    const double s = static_cast<double>(z.sum());
    const double trace = static_cast<double>(gamma.trace());
    const double drift_term = std::min(p.mu_low * s, p.mu_high * s) / std::sqrt(p.a_low);
    const double volatility_term = std::max(p.a_low * trace, p.a_high * trace) / (2.0 * p.a_low);
    const RowVector<Real> state = path.row(path.rows() - 1);
    const RowVector<Real> integral = trapezoid_integral<Real>(path, grid);
    return static_cast<Real>(drift_term + volatility_term - 0.5 * trace) +
           game_running_cost<Real>(p, state, integral);
}

template <typename Real>
Real game_exact_solution(PathRef<Real> path, const TimeGrid& grid) {
    if (path.rows() < 1) throw std::invalid_argument("game_exact_solution: empty path");
    const RowVector<Real> integral = trapezoid_integral<Real>(path, grid);
    return std::cos((path.row(path.rows() - 1) + integral).mean());
}

template <typename Real>
Real asian_payoff(PathRef<Real> path, const TimeGrid& grid, double strike) {
    const Real average = trapezoid_integral<Real>(path, grid).mean() /
                         static_cast<Real>(grid.horizon);
    return std::max(average - static_cast<Real>(strike), Real(0));
}

template <typename Real>
Real barrier_payoff(PathRef<Real> path, double strike, double barrier) {
    if (!(running_max_mean<Real>(path) < static_cast<Real>(barrier))) return Real(0);
    return std::max(path.row(path.rows() - 1).mean() - static_cast<Real>(strike), Real(0));
}

template <typename Real>
ProblemSpec<Real> make_control_problem(int dim, const GameParams& params, double horizon) {
    params.validate();
    if (dim < 1) throw std::invalid_argument("make_control_problem: dim must be >= 1");
    ProblemSpec<Real> spec;
    spec.name = "ControlProblem";
    spec.dim = dim;
    spec.x0 = Vector<Real>::Zero(dim);
    spec.horizon = horizon;
    spec.kind = GeneratorKind::fully_nonlinear;
    spec.diffusion_kind = DiffusionKind::diagonal;
    const auto volatility = static_cast<Real>(std::sqrt(params.a_low));
    spec.drift = [](double, PathRef<Real>, const TimeGrid&, Eigen::Ref<RowVector<Real>> out) {
        out.setZero();
    };
    spec.diffusion = [volatility](double, PathRef<Real>, const TimeGrid&,
                                  Eigen::Ref<RowVector<Real>> out) { out.setConstant(volatility); };
    spec.generator = [params](double t, PathRef<Real> path, const TimeGrid& grid, Real,
                              const Eigen::Ref<const RowVector<Real>>& z,
                              const Eigen::Ref<const Matrix<Real>>& gamma) {
        return game_generator<Real>(params, t, path, grid, z, gamma);
    };
    spec.terminal = [](PathRef<Real> path, const TimeGrid& grid) {
        return game_exact_solution<Real>(path, grid);
    };
    return spec;
}

namespace {

template <typename Real>
ProblemSpec<Real> make_gbm_problem(int dim, const OptionParams& params, double horizon) {
    params.validate(dim);
    ProblemSpec<Real> spec;
    spec.dim = dim;
    spec.x0 = Vector<Real>::Ones(dim);
    spec.horizon = horizon;
    spec.kind = GeneratorKind::linear;
    spec.diffusion_kind = DiffusionKind::diagonal;
    RowVector<Real> rates(dim);
    RowVector<Real> vols(dim);
    for (int a = 0; a < dim; ++a) {
        rates(a) = static_cast<Real>(params.rates[static_cast<std::size_t>(a)]);
        vols(a) = static_cast<Real>(params.volatilities[static_cast<std::size_t>(a)]);
    }
    spec.drift = [rates](double, PathRef<Real> path, const TimeGrid&,
                         Eigen::Ref<RowVector<Real>> out) {
        out = rates.cwiseProduct(path.row(path.rows() - 1));
    };
    spec.diffusion = [vols](double, PathRef<Real> path, const TimeGrid&,
                            Eigen::Ref<RowVector<Real>> out) {
        out = vols.cwiseProduct(path.row(path.rows() - 1));
    };
    const double r0 = params.discount_rate;
    spec.generator = [r0](double, PathRef<Real>, const TimeGrid&, Real y,
                          const Eigen::Ref<const RowVector<Real>>&,
                          const Eigen::Ref<const Matrix<Real>>&) {
        return linear_generator<Real>(y, r0);
    };
    return spec;
}

}  // namespace

template <typename Real>
ProblemSpec<Real> make_asian_problem(int dim, const OptionParams& params, double horizon) {
    ProblemSpec<Real> spec = make_gbm_problem<Real>(dim, params, horizon);
    spec.name = "AsianOption";
    const double strike = params.strike;
    spec.terminal = [strike](PathRef<Real> path, const TimeGrid& grid) {
        return asian_payoff<Real>(path, grid, strike);
    };
    return spec;
}

template <typename Real>
ProblemSpec<Real> make_barrier_problem(int dim, const OptionParams& params, double horizon) {
    ProblemSpec<Real> spec = make_gbm_problem<Real>(dim, params, horizon);
    spec.name = "BarrierOption";
    const double strike = params.strike;
    const double barrier = params.barrier;
    spec.terminal = [strike, barrier](PathRef<Real> path, const TimeGrid&) {
        return barrier_payoff<Real>(path, strike, barrier);
    };
    return spec;
}

bool is_known_problem(const std::string& name) {
    return name == "ControlProblem" || name == "AsianOption" || name == "BarrierOption";
}

template <typename Real>
ProblemSpec<Real> make_problem(const std::string& name, int dim, const ProblemParams& params) {
    if (name == "ControlProblem") return make_control_problem<Real>(dim, params.game, params.horizon);
    const OptionParams option =
        OptionParams::uniform(dim, params.option_rate, params.option_volatility, params.strike,
                              params.barrier, params.discount_rate);
    if (name == "AsianOption") return make_asian_problem<Real>(dim, option, params.horizon);
    if (name == "BarrierOption") return make_barrier_problem<Real>(dim, option, params.horizon);
    throw std::invalid_argument("unknown problem '" + name +
                                "' (expected ControlProblem, AsianOption or BarrierOption)");
}

template <typename Real>
Matrix<Real> evaluate_drift(const ProblemSpec<Real>& problem, const PathBatch<Real>& batch) {
    const double t = batch.grid().time(batch.known_steps());
    Matrix<Real> out(batch.batch(), problem.dim);
    for (Eigen::Index j = 0; j < batch.batch(); ++j) {
        problem.drift(t, batch.sample(j), batch.grid(), out.row(j));
    }
    return out;
}

template <typename Real>
DiffusionEval<Real> evaluate_diffusion(const ProblemSpec<Real>& problem,
                                       const PathBatch<Real>& batch) {
    const double t = batch.grid().time(batch.known_steps());
    const Eigen::Index cols = problem.diffusion_kind == DiffusionKind::diagonal
                                  ? problem.dim
                                  : static_cast<Eigen::Index>(problem.dim) * problem.dim;
    DiffusionEval<Real> out{problem.diffusion_kind, Matrix<Real>(batch.batch(), cols)};
    for (Eigen::Index j = 0; j < batch.batch(); ++j) {
        problem.diffusion(t, batch.sample(j), batch.grid(), out.values.row(j));
    }
    return out;
}

template <typename Real>
SimulatedBatch<Real> simulate(const ProblemSpec<Real>& problem, const TimeGrid& grid,
                              Eigen::Index batch, int steps, RngStream& rng) {
    if (steps < 1 || steps > grid.steps) {
        throw std::invalid_argument("simulate: steps must lie in [1, N]");
    }
    PathBatch<Real> paths = PathBatch<Real>::start(grid, problem.x0, batch);
    const double stddev = std::sqrt(grid.step);
    Matrix<Real> increments;
    for (int k = 0; k < steps; ++k) {
        increments = gaussian_matrix<Real>(rng, batch, problem.dim, stddev);
        const Matrix<Real> drift = evaluate_drift(problem, paths);
        const DiffusionEval<Real> diffusion = evaluate_diffusion(problem, paths);
        paths = euler_step(paths, drift, diffusion, increments);
    }
    return {std::move(paths), std::move(increments)};
}

template <typename Real>
void check_problem(const ProblemSpec<Real>& problem, const TimeGrid& grid, RngStream& rng,
                   int samples) {
    if (problem.dim < 1 || problem.x0.size() != problem.dim) {
        throw std::invalid_argument("problem '" + problem.name + "': x0 has wrong dimension");
    }
    if (!problem.drift || !problem.diffusion || !problem.generator || !problem.terminal) {
        throw std::invalid_argument("problem '" + problem.name + "': missing callback");
    }
    const int d = problem.dim;
    const int steps = std::min(grid.steps, 2);
    const SimulatedBatch<Real> sim = simulate(problem, grid, samples, steps, rng);
    const DiffusionEval<Real> sigma = evaluate_diffusion(problem, sim.paths);
    for (Eigen::Index j = 0; j < sigma.values.rows(); ++j) {
        double condition = 0.0;
        if (sigma.kind == DiffusionKind::diagonal) {
            const auto magnitudes = sigma.values.row(j).cwiseAbs();
            condition = static_cast<double>(magnitudes.maxCoeff()) /
                        static_cast<double>(magnitudes.minCoeff());
        } else {
            const Eigen::Map<const Matrix<Real>> m(sigma.values.row(j).data(), d, d);
            Eigen::JacobiSVD<Matrix<double>> svd(m.template cast<double>());
            const auto& sv = svd.singularValues();
            condition = sv(0) / sv(sv.size() - 1);
        }
        if (!std::isfinite(condition) || condition > 1e12) {
            throw std::invalid_argument("problem '" + problem.name +
                                        "': diffusion is not invertible on sampled states");
        }
    }
    if (problem.kind == GeneratorKind::linear) {
        const double t = grid.time(steps);
        for (Eigen::Index j = 0; j < sim.paths.batch(); ++j) {
            const auto path = sim.paths.sample(j);
            const RowVector<Real> z0 = RowVector<Real>::Zero(d);
            const Matrix<Real> g0 = Matrix<Real>::Zero(d, d);
            const Real y = static_cast<Real>(rng.normal());
            const Real base = problem.generator(t, path, grid, y, z0, g0);
            const RowVector<Real> z1 = gaussian_matrix<Real>(rng, 1, d, 1.0);
            Matrix<Real> g1 = gaussian_matrix<Real>(rng, d, d, 1.0);
            g1 = (g1 + g1.transpose().eval()) / Real(2);
            const Real moved = problem.generator(t, path, grid, y, z1, g1);
            if (moved != base) {
                throw std::invalid_argument("problem '" + problem.name +
                                            "': declared linear but F depends on z or gamma");
            }
        }
    }
}

#define PPDE_INSTANTIATE_PROBLEMS(Real)                                                          \
    template Real game_generator(const GameParams&, double, PathRef<Real>, const TimeGrid&,     \
                                 const Eigen::Ref<const RowVector<Real>>&,                      \
                                 const Eigen::Ref<const Matrix<Real>>&);                        \
    template Real game_running_cost(const GameParams&, const RowVector<Real>&,                  \
                                    const RowVector<Real>&);                                    \
    template Real game_exact_solution(PathRef<Real>, const TimeGrid&);                          \
    template Real asian_payoff(PathRef<Real>, const TimeGrid&, double);                         \
    template Real barrier_payoff(PathRef<Real>, double, double);                                \
    template ProblemSpec<Real> make_control_problem(int, const GameParams&, double);            \
    template ProblemSpec<Real> make_asian_problem(int, const OptionParams&, double);            \
    template ProblemSpec<Real> make_barrier_problem(int, const OptionParams&, double);          \
    template ProblemSpec<Real> make_problem(const std::string&, int, const ProblemParams&);     \
    template void check_problem(const ProblemSpec<Real>&, const TimeGrid&, RngStream&, int);    \
    template Matrix<Real> evaluate_drift(const ProblemSpec<Real>&, const PathBatch<Real>&);     \
    template DiffusionEval<Real> evaluate_diffusion(const ProblemSpec<Real>&,                   \
                                                    const PathBatch<Real>&);                    \
    template SimulatedBatch<Real> simulate(const ProblemSpec<Real>&, const TimeGrid&,           \
                                           Eigen::Index, int, RngStream&);

PPDE_INSTANTIATE_PROBLEMS(float)
PPDE_INSTANTIATE_PROBLEMS(double)

}  // namespace ppde
