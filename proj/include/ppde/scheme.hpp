#pragma once

#include "ppde/network.hpp"
#include "ppde/optimizer.hpp"
#include "ppde/problems.hpp"
#include "ppde/weights.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ppde {

/// How the Gamma regression output is turned into a symmetric matrix.
///  paper: d(d+1)/2 outputs; strictly-upper entries filled superdiagonal by
///         superdiagonal starting from the top-right corner, the last d
///         outputs doubled on the diagonal.
///  code:  d*d outputs; keep the upper triangle, then (G + G^T) / 2.
enum class SymVariant { paper, code };

SymVariant parse_sym_variant(const std::string& name);
std::string to_string(SymVariant variant);

/// Entry (a, b) of the symmetric matrix is coef[a*d+b] * values[index[a*d+b]].
struct SymLayout {
    int dim = 0;
    SymVariant variant = SymVariant::paper;
    int input_size = 0;
    std::vector<int> index;
    std::vector<double> coef;

    static SymLayout make(int dim, SymVariant variant);
};

int sym_input_size(int dim, SymVariant variant);

/// d x d symmetric matrix from the Gamma outputs of one sample.
template <typename Real>
Matrix<Real> sym(const RowVector<Real>& values, int dim, SymVariant variant = SymVariant::paper);

/// Row-wise sym over a batch: batch x input_size -> batch x d*d.
template <typename Real>
Matrix<Real> sym_batch(const Matrix<Real>& values, const SymLayout& layout);

struct SchemeConfig {
    std::string problem = "ControlProblem";
    ProblemParams problem_params;
    int dim = 1;
    int steps = 10;           // N
    int batch = 256;          // O
    long train_steps = 900;   // P
    int width = 0;            // m; 0 means d + 10
    int hidden_layers = 2;    // l
    Activation activation = Activation::relu;
    bool variance_reduction = true;
    std::uint64_t seed = 0;
    Precision precision = Precision::f64;
    AdamHyper adam;
    std::array<double, 3> learning_rates{0.1, 0.01, 0.001};
    BatchNormConfig batch_norm;
    SymVariant sym = SymVariant::paper;

    int effective_width() const { return width > 0 ? width : dim + 10; }
    TimeGrid grid() const { return TimeGrid::with_steps(problem_params.horizon, steps); }
    void validate() const;
};

/// Regressions of one time step. Steps i >= 1 use networks on (i+1)d inputs;
/// step 0 sees only the deterministic x0 and uses plain constants.
template <typename Real>
struct StepModel {
    int step = 0;
    bool trained = false;
    bool constant = false;
    NetworkParams<Real> y_net;
    std::optional<NetworkParams<Real>> z_net;
    std::optional<NetworkParams<Real>> gamma_net;
    Vector<Real> y0;
    Vector<Real> z0;
    Vector<Real> gamma0;
};

template <typename Real>
using StepModels = std::vector<StepModel<Real>>;

/// Raw regression outputs on a batch (gamma before Sym).
template <typename Real>
struct StepOutputs {
    Vector<Real> y;
    Matrix<Real> z;
    Matrix<Real> gamma;
};

struct SolverResult {
    double v0 = 0.0;
    std::vector<double> step_losses;  // indexed by time step i
    double runtime_seconds = 0.0;
    std::uint64_t seed = 0;
    SchemeConfig config;
};

/// step, iteration (1-based), loss, learning rate.
using LossTrace = std::function<void(int, long, double, double)>;

/// V_i(x) = y + h F(ih, x, y, z, gamma_sym) per sample; z and gamma_sym
/// (batch x d*d) are ignored for linear generators.
template <typename Real>
Vector<Real> assemble_v_hat(int step, const PathBatch<Real>& paths, const Vector<Real>& y,
                            const Matrix<Real>& z, const Matrix<Real>& gamma_sym,
                            const ProblemSpec<Real>& problem);

template <typename Real>
struct StepLoss {
    double loss = 0.0;
    Vector<Real> d_y;
    Matrix<Real> d_z;
    Matrix<Real> d_gamma;  // w.r.t. the raw Gamma outputs
};

/// Batch mean of |y - y*|^2 + |z - z*|^2 + |Sym(gamma) - G*|_F^2 and its exact
/// derivative w.r.t. the outputs (targets held constant). Terms absent from
/// the targets are skipped.
template <typename Real>
StepLoss<Real> step_loss(const TargetBatch<Real>& targets, const Vector<Real>& y_out,
                         const Matrix<Real>& z_out, const Matrix<Real>& gamma_out,
                         const SymLayout& layout);

/// Backward induction over the time grid.
template <typename Real>
class Solver {
public:
    Solver(SchemeConfig config, ProblemSpec<Real> problem);

    const SchemeConfig& config() const { return config_; }
    const ProblemSpec<Real>& problem() const { return problem_; }
    const TimeGrid& grid() const { return grid_; }
    const StepModels<Real>& models() const { return models_; }
    const SymLayout& layout() const { return layout_; }

    /// Trains step i; step i+1 must already be trained (or i = N-1).
    /// Returns the final loss.
    double train_step(int step, const LossTrace& trace = {});

    /// Trains i = N-1, ..., 0 and reports V_0(x0).
    SolverResult solve(const LossTrace& trace = {});

    /// Inference-mode outputs of step i on paths known up to grid index i.
    StepOutputs<Real> outputs(int step, const PathBatch<Real>& paths) const;
    /// V_i on paths known up to grid index i; V_N = g.
    Vector<Real> v_hat(int step, const PathBatch<Real>& paths) const;
    /// V_0(x0); requires step 0 to be trained.
    double v0() const;

private:
    SchemeConfig config_;
    ProblemSpec<Real> problem_;
    TimeGrid grid_;
    SymLayout layout_;
    StepModels<Real> models_;
    std::vector<double> losses_;
};

/// Builds the named problem at the configured precision and solves it.
SolverResult solve(const SchemeConfig& config, const LossTrace& trace = {});

}  // namespace ppde
