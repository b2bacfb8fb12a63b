#include "ppde/problems.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace ppde;

namespace {

const TimeGrid kGrid = TimeGrid::with_steps(0.1, 10);

Matrix<double> constant_path(int rows, int dim, double value) {
    return Matrix<double>::Constant(rows, dim, value);
}

}  // namespace

TEST(GameParams, Validation) {
    GameParams p;
    EXPECT_NO_THROW(p.validate());
    p.mu_low = 0.5;
    EXPECT_THROW(p.validate(), std::invalid_argument);
    p = GameParams{};
    p.a_low = 0.0;
    EXPECT_THROW(p.validate(), std::invalid_argument);
    p = GameParams{};
    p.a_high = 0.01;
    EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(GameGenerator, OriginValue) {
    const RowVector<double> z = RowVector<double>::Zero(1);
    const Matrix<double> gamma = Matrix<double>::Zero(1, 1);
    const double f = game_generator<double>(GameParams{}, 0.0, constant_path(1, 1, 0.0), kGrid,
                                            z, gamma);
    EXPECT_NEAR(f, 0.02, 1e-15);
}

TEST(GameGenerator, ControlBranches) {
    const GameParams p;
    const Matrix<double> path = constant_path(1, 2, 0.0);
    const Matrix<double> zero_gamma = Matrix<double>::Zero(2, 2);
    const double base = game_generator<double>(p, 0.0, path, kGrid, RowVector<double>::Zero(2),
                                               zero_gamma);
    RowVector<double> z(2);
    z << 0.3, 0.2;  // s > 0: mu_low
    EXPECT_NEAR(game_generator<double>(p, 0.0, path, kGrid, z, zero_gamma) - base,
                -0.2 * 0.5 / 0.2, 1e-14);
    z << -0.3, -0.2;  // s < 0: mu_high
    EXPECT_NEAR(game_generator<double>(p, 0.0, path, kGrid, z, zero_gamma) - base,
                0.2 * -0.5 / 0.2, 1e-14);

    const RowVector<double> z0 = RowVector<double>::Zero(2);
    Matrix<double> gamma = Matrix<double>::Identity(2, 2);  // tr > 0: a_high
    EXPECT_NEAR(game_generator<double>(p, 0.0, path, kGrid, z0, gamma) - base,
                0.09 * 2 / 0.08 - 1.0, 1e-14);
    gamma = -gamma;  // tr < 0: a_low
    EXPECT_NEAR(game_generator<double>(p, 0.0, path, kGrid, z0, gamma) - base,
                0.04 * -2 / 0.08 + 1.0, 1e-14);
}

TEST(GameGenerator, RejectsAsymmetricGamma) {
    Matrix<double> gamma(2, 2);
    gamma << 1.0, 0.5, 0.4, 1.0;
    EXPECT_THROW(game_generator<double>(GameParams{}, 0.0, constant_path(1, 2, 0.0), kGrid,
                                        RowVector<double>::Zero(2), gamma),
                 std::invalid_argument);
}

TEST(GameGenerator, DegenerateControlSet) {
    GameParams p{0.15, 0.15, 0.05, 0.05};
    RngStream rng(3);
    for (int k = 0; k < 50; ++k) {
        const Matrix<double> path = gaussian_matrix<double>(rng, 4, 2, 0.5);
        const RowVector<double> z = gaussian_matrix<double>(rng, 1, 2, 1.0);
        Matrix<double> g = gaussian_matrix<double>(rng, 2, 2, 1.0);
        g = (g + g.transpose().eval()) / 2.0;
        const double f = game_generator<double>(p, 0.0, path, kGrid, z, g);
        const double expected = 0.15 * z.sum() / std::sqrt(0.05) +
                                game_running_cost<double>(p, path.row(3),
                                                          trapezoid_integral<double>(path, kGrid));
        EXPECT_NEAR(f, expected, 1e-12);
    }
}

// u = cos(mean(w_t + int w)) solves
//   d_t u + 1/2 tr(gamma) + F(z, gamma) = 0
// with z = sigma^T grad u and gamma = sigma^T Hess u sigma, sigma = sqrt(a_low) I.
TEST(GameGenerator, ExactSolutionSatisfiesEquation) {
    const GameParams p;
    RngStream rng(4);
    for (int d : {1, 3}) {
        for (int k = 0; k < 200; ++k) {
            const Matrix<double> path = gaussian_matrix<double>(rng, 5, d, 1.5);
            const RowVector<double> state = path.row(4);
            const RowVector<double> integral = trapezoid_integral<double>(path, kGrid);
            const double phase = (state + integral).mean();
            const double s = std::sin(phase), c = std::cos(phase);
            const double vol = std::sqrt(p.a_low);
            const RowVector<double> z = RowVector<double>::Constant(d, -vol * s / d);
            const Matrix<double> gamma = Matrix<double>::Constant(d, d, -p.a_low * c / (d * d));
            const double dt = -s * state.mean();
            const double residual =
                dt + 0.5 * gamma.trace() + game_generator<double>(p, 0.0, path, kGrid, z, gamma);
            EXPECT_NEAR(residual, 0.0, 1e-12) << "d=" << d << " phase=" << phase;
        }
    }
}

TEST(GameGenerator, LipschitzSlopesBounded) {
    const GameParams p;
    RngStream rng(5);
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
        const Matrix<double> path = gaussian_matrix<double>(rng, 3, 2, 1.0);
        const RowVector<double> z = gaussian_matrix<double>(rng, 1, 2, 1.0);
        const RowVector<double> dz = gaussian_matrix<double>(rng, 1, 2, 1e-3);
        Matrix<double> g = gaussian_matrix<double>(rng, 2, 2, 1.0);
        g = (g + g.transpose().eval()) / 2.0;
        Matrix<double> dg = gaussian_matrix<double>(rng, 2, 2, 1e-3);
        dg = (dg + dg.transpose().eval()) / 2.0;
        const double a = game_generator<double>(p, 0.0, path, kGrid, z, g);
        const double b = game_generator<double>(p, 0.0, path, kGrid, z + dz, g + dg);
        const double slope = std::abs(b - a) / std::sqrt(dz.squaredNorm() + dg.squaredNorm());
        ASSERT_TRUE(std::isfinite(slope));
        worst = std::max(worst, slope);
    }
    RecordProperty("max_slope", std::to_string(worst));
    EXPECT_LT(worst, 1e3);
}

TEST(GameExactSolution, Examples) {
    EXPECT_EQ(game_exact_solution<double>(constant_path(1, 3, 0.0), kGrid), 1.0);
    const Matrix<double> c = constant_path(6, 1, 0.7);  // t = 5h = 0.05
    EXPECT_NEAR(game_exact_solution<double>(c, kGrid), std::cos(0.7 + 0.7 * 0.05), 1e-15);
    RngStream rng(6);
    const Matrix<double> path = gaussian_matrix<double>(rng, 7, 2, 1.0);
    EXPECT_EQ(game_exact_solution<double>(path, kGrid),
              game_exact_solution<double>(Matrix<double>(-path), kGrid));
}

TEST(GameExactSolution, TerminalIsTheSameFormula) {
    const auto problem = make_control_problem<double>(2, GameParams{});
    RngStream rng(7);
    const auto sim = simulate(problem, kGrid, 8, 10, rng);
    for (Eigen::Index j = 0; j < 8; ++j) {
        EXPECT_NEAR(problem.terminal(sim.paths.sample(j), kGrid),
                    game_exact_solution<double>(sim.paths.sample(j), kGrid), 1e-12);
    }
}

TEST(AsianPayoff, Examples) {
    EXPECT_NEAR(asian_payoff<double>(constant_path(11, 2, 1.0), kGrid, 0.7), 0.3, 1e-15);
    EXPECT_EQ(asian_payoff<double>(constant_path(11, 2, 0.5), kGrid, 0.7), 0.0);
    Matrix<double> two(2, 1);
    two << 1.0, 1.1;
    EXPECT_NEAR(asian_payoff<double>(two, TimeGrid::with_steps(0.1, 1), 0.7), 0.35, 1e-14);
}

TEST(BarrierPayoff, Examples) {
    EXPECT_NEAR(barrier_payoff<double>(constant_path(11, 1, 1.0), 0.7, 1.2), 0.3, 1e-15);
    Matrix<double> touched = constant_path(11, 1, 1.0);
    touched(4, 0) = 1.25;
    EXPECT_EQ(barrier_payoff<double>(touched, 0.7, 1.2), 0.0);
    EXPECT_EQ(barrier_payoff<double>(constant_path(11, 1, 0.6), 0.7, 1.2), 0.0);
}

TEST(Payoffs, NonNegative) {
    RngStream rng(8);
    for (int k = 0; k < 500; ++k) {
        const Matrix<double> path = (gaussian_matrix<double>(rng, 11, 3, 0.3).array() + 0.8).matrix();
        EXPECT_GE(asian_payoff<double>(path, kGrid, 0.7), 0.0);
        EXPECT_GE(barrier_payoff<double>(path, 0.7, 1.2), 0.0);
    }
}

TEST(LinearGenerator, Examples) {
    EXPECT_DOUBLE_EQ(linear_generator(1.0, 0.01), -0.01);
    EXPECT_EQ(linear_generator(0.0, 0.01), 0.0);
    EXPECT_DOUBLE_EQ(linear_generator(2.6, 0.01), 2.0 * linear_generator(1.3, 0.01));
}

TEST(Problems, NamedConstructionAndChecks) {
    const ProblemParams params;
    for (const char* name : {"ControlProblem", "AsianOption", "BarrierOption"}) {
        ASSERT_TRUE(is_known_problem(name));
        const auto p = make_problem<double>(name, 3, params);
        EXPECT_EQ(p.name, name);
        EXPECT_EQ(p.dim, 3);
        RngStream rng(9);
        EXPECT_NO_THROW(check_problem(p, kGrid, rng));
    }
    EXPECT_FALSE(is_known_problem("EuropeanOption"));
    EXPECT_THROW(make_problem<double>("EuropeanOption", 1, params), std::invalid_argument);
    EXPECT_TRUE(make_problem<double>("ControlProblem", 1, params).fully_nonlinear());
    EXPECT_FALSE(make_problem<double>("AsianOption", 1, params).fully_nonlinear());
}

TEST(Problems, CheckRejectsMislabelledLinearGenerator) {
    auto p = make_asian_problem<double>(1, OptionParams::uniform(1));
    p.generator = [](double, PathRef<double>, const TimeGrid&, double y,
                     const Eigen::Ref<const RowVector<double>>& z,
                     const Eigen::Ref<const Matrix<double>>&) { return -0.01 * y + z.sum(); };
    RngStream rng(10);
    EXPECT_THROW(check_problem(p, kGrid, rng), std::invalid_argument);
}

TEST(Problems, CheckRejectsSingularDiffusion) {
    auto p = make_asian_problem<double>(2, OptionParams::uniform(2));
    p.diffusion = [](double, PathRef<double>, const TimeGrid&, Eigen::Ref<RowVector<double>> out) {
        out << 0.1, 0.0;
    };
    RngStream rng(11);
    EXPECT_THROW(check_problem(p, kGrid, rng), std::invalid_argument);
}

TEST(OptionParams, Validation) {
    EXPECT_NO_THROW(OptionParams::uniform(3).validate(3));
    EXPECT_THROW(OptionParams::uniform(3).validate(2), std::invalid_argument);
    auto p = OptionParams::uniform(2);
    p.volatilities[1] = 0.0;
    EXPECT_THROW(p.validate(2), std::invalid_argument);
}

TEST(Simulate, GbmEulerCoefficients) {
    const auto p = make_asian_problem<double>(2, OptionParams::uniform(2));
    const TimeGrid grid = TimeGrid::with_steps(0.1, 10);
    RngStream a(12), b(12);
    const auto sim = simulate(p, grid, 4, 1, a);
    const Matrix<double> inc = gaussian_matrix<double>(b, 4, 2, std::sqrt(grid.step));
    EXPECT_TRUE((sim.last_increments.array() == inc.array()).all());
    const Matrix<double> expected = (1.0 + 0.01 * 0.01 + 0.1 * inc.array()).matrix();
    EXPECT_LT((sim.paths.last_points() - expected).cwiseAbs().maxCoeff(), 1e-15);
}
