#include "ppde/scheme.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace ppde {

SymVariant parse_sym_variant(const std::string& name) {
    if (name == "paper") return SymVariant::paper;
    if (name == "code") return SymVariant::code;
    throw std::invalid_argument("unknown Sym variant '" + name + "' (paper|code)");
}

std::string to_string(SymVariant variant) {
    return variant == SymVariant::code ? "code" : "paper";
}

int sym_input_size(int dim, SymVariant variant) {
    return variant == SymVariant::code ? dim * dim : dim * (dim + 1) / 2;
}

SymLayout SymLayout::make(int dim, SymVariant variant) {
    if (dim < 1) throw std::invalid_argument("SymLayout: dimension must be >= 1");
    SymLayout layout;
    layout.dim = dim;
    layout.variant = variant;
    layout.input_size = sym_input_size(dim, variant);
    layout.index.assign(static_cast<std::size_t>(dim) * dim, 0);
    layout.coef.assign(static_cast<std::size_t>(dim) * dim, 0.0);
    auto put = [&](int a, int b, int k, double c) {
        layout.index[static_cast<std::size_t>(a) * dim + b] = k;
        layout.coef[static_cast<std::size_t>(a) * dim + b] = c;
    };

    if (variant == SymVariant::code) {
        for (int a = 0; a < dim; ++a) {
            for (int b = 0; b < dim; ++b) {
                const int lo = std::min(a, b), hi = std::max(a, b);
                put(a, b, lo * dim + hi, a == b ? 1.0 : 0.5);
            }
        }
        return layout;
    }

    // Superdiagonals from the corner inwards, each read top to bottom.
    int k = 0;
    for (int offset = dim - 1; offset >= 1; --offset) {
        for (int r = 0; r + offset < dim; ++r, ++k) {
            put(r, r + offset, k, 1.0);
            put(r + offset, r, k, 1.0);
        }
    }
    for (int r = 0; r < dim; ++r, ++k) put(r, r, k, 2.0);
    return layout;
}

template <typename Real>
Matrix<Real> sym(const RowVector<Real>& values, int dim, SymVariant variant) {
    const SymLayout layout = SymLayout::make(dim, variant);
    if (values.size() != layout.input_size) {
        throw std::invalid_argument("sym: expected " + std::to_string(layout.input_size) +
                                    " values, got " + std::to_string(values.size()));
    }
    Matrix<Real> out(dim, dim);
    for (int e = 0; e < dim * dim; ++e) {
        out.data()[e] = static_cast<Real>(layout.coef[e]) * values(layout.index[e]);
    }
    return out;
}

template <typename Real>
Matrix<Real> sym_batch(const Matrix<Real>& values, const SymLayout& layout) {
    if (values.cols() != layout.input_size) {
        throw std::invalid_argument("sym_batch: column count does not match the layout");
    }
    const int n = layout.dim * layout.dim;
    Matrix<Real> out(values.rows(), n);
    for (Eigen::Index j = 0; j < values.rows(); ++j) {
        for (int e = 0; e < n; ++e) {
            out(j, e) = static_cast<Real>(layout.coef[e]) * values(j, layout.index[e]);
        }
    }
    return out;
}

void SchemeConfig::validate() const {
    if (!is_known_problem(problem)) throw std::invalid_argument("unknown problem '" + problem + "'");
    if (dim < 1) throw std::invalid_argument("dimension must be >= 1");
    if (steps < 1) throw std::invalid_argument("number of time steps must be >= 1");
    if (batch < 2) throw std::invalid_argument("batch size must be >= 2 for batch normalization");
    if (train_steps < 1) throw std::invalid_argument("training steps per time step must be >= 1");
    if (width < 0) throw std::invalid_argument("width must be >= 0");
    if (hidden_layers < 1) throw std::invalid_argument("hidden layers must be >= 1");
    if (!(problem_params.horizon > 0.0)) throw std::invalid_argument("horizon must be > 0");
    for (double lr : learning_rates) {
        if (!(lr > 0.0)) throw std::invalid_argument("learning rates must be > 0");
    }
}

template <typename Real>
Vector<Real> assemble_v_hat(int step, const PathBatch<Real>& paths, const Vector<Real>& y,
                            const Matrix<Real>& z, const Matrix<Real>& gamma_sym,
                            const ProblemSpec<Real>& problem) {
    const TimeGrid& grid = paths.grid();
    const int d = paths.dim();
    const Eigen::Index batch = paths.batch();
    if (paths.known_steps() != step) {
        throw std::invalid_argument("assemble_v_hat: paths known up to " +
                                    std::to_string(paths.known_steps()) + ", step is " +
                                    std::to_string(step));
    }
    if (y.size() != batch) throw std::invalid_argument("assemble_v_hat: y size mismatch");
    const bool full = problem.fully_nonlinear();
    if (full && (z.rows() != batch || z.cols() != d || gamma_sym.rows() != batch ||
                 gamma_sym.cols() != d * d)) {
        throw std::invalid_argument("assemble_v_hat: z/gamma shape mismatch");
    }

    const double t = grid.time(step);
    const auto h = static_cast<Real>(grid.step);
    const RowVector<Real> zero_z = RowVector<Real>::Zero(d);
    const Matrix<Real> zero_gamma = Matrix<Real>::Zero(d, d);
    Vector<Real> out(batch);
    for (Eigen::Index j = 0; j < batch; ++j) {
        Real f;
        if (full) {
            const Eigen::Map<const Matrix<Real>> gamma(gamma_sym.row(j).data(), d, d);
            f = problem.generator(t, paths.sample(j), grid, y(j), z.row(j), gamma);
        } else {
            f = problem.generator(t, paths.sample(j), grid, y(j), zero_z, zero_gamma);
        }
        out(j) = y(j) + h * f;
    }
    return out;
}

template <typename Real>
StepLoss<Real> step_loss(const TargetBatch<Real>& targets, const Vector<Real>& y_out,
                         const Matrix<Real>& z_out, const Matrix<Real>& gamma_out,
                         const SymLayout& layout) {
    const Eigen::Index batch = y_out.size();
    if (targets.y.size() != batch) throw std::invalid_argument("step_loss: y size mismatch");
    const Real scale = Real(2) / static_cast<Real>(batch);

    StepLoss<Real> out;
    const Vector<Real> ry = y_out - targets.y;
    double total = ry.template cast<double>().squaredNorm();
    out.d_y = scale * ry;

    if (targets.has_z) {
        if (z_out.rows() != batch || z_out.cols() != targets.z.cols()) {
            throw std::invalid_argument("step_loss: z shape mismatch");
        }
        const Matrix<Real> rz = z_out - targets.z;
        total += rz.template cast<double>().squaredNorm();
        out.d_z = scale * rz;
    }
    if (targets.has_g) {
        if (gamma_out.rows() != batch || gamma_out.cols() != layout.input_size) {
            throw std::invalid_argument("step_loss: gamma shape mismatch");
        }
        const Matrix<Real> rg = sym_batch(gamma_out, layout) - targets.g;
        total += rg.template cast<double>().squaredNorm();
        out.d_gamma = Matrix<Real>::Zero(batch, layout.input_size);
        const int n = layout.dim * layout.dim;
        for (Eigen::Index j = 0; j < batch; ++j) {
            for (int e = 0; e < n; ++e) {
                out.d_gamma(j, layout.index[e]) +=
                    static_cast<Real>(layout.coef[e]) * scale * rg(j, e);
            }
        }
    }
    out.loss = total / static_cast<double>(batch);
    return out;
}

namespace {

template <typename Real>
Vector<Real> uniform_vector(RngStream& rng, Eigen::Index size, double bound) {
    Vector<Real> out(size);
    for (Eigen::Index k = 0; k < size; ++k) out(k) = static_cast<Real>(rng.uniform(-bound, bound));
    return out;
}

template <typename Real>
Matrix<Real> replicate_row(const Vector<Real>& values, Eigen::Index rows) {
    return values.transpose().replicate(rows, 1);
}

template <typename Real>
void update_network(NetworkParams<Real>& net, AdamState<Real>& state,
                    const NetworkParams<Real>& grad, double lr) {
    Vector<Real> flat = net.pack();
    adam_step(state, flat, grad.pack(), lr);
    net.unpack(flat);
}

// Constants of the time-0 step start near zero, as an untrained bias would.
constexpr double kConstantInitBound = 0.05;

}  // namespace

template <typename Real>
Solver<Real>::Solver(SchemeConfig config, ProblemSpec<Real> problem)
    : config_(std::move(config)),
      problem_(std::move(problem)),
      grid_(config_.grid()),
      layout_(SymLayout::make(config_.dim, config_.sym)),
      models_(static_cast<std::size_t>(config_.steps)),
      losses_(static_cast<std::size_t>(config_.steps), 0.0) {
    config_.validate();
    if (problem_.dim != config_.dim) {
        throw std::invalid_argument("Solver: problem dimension does not match the config");
    }
    for (int i = 0; i < config_.steps; ++i) models_[static_cast<std::size_t>(i)].step = i;
}

template <typename Real>
StepOutputs<Real> Solver<Real>::outputs(int step, const PathBatch<Real>& paths) const {
    if (step < 0 || step >= config_.steps) throw std::out_of_range("Solver::outputs: bad step");
    const StepModel<Real>& model = models_[static_cast<std::size_t>(step)];
    if (!model.trained) {
        throw std::logic_error("Solver::outputs: step " + std::to_string(step) + " not trained");
    }
    if (paths.known_steps() != step) {
        throw std::invalid_argument("Solver::outputs: paths do not end at the step");
    }
    const Eigen::Index batch = paths.batch();
    StepOutputs<Real> out;
    if (model.constant) {
        out.y = Vector<Real>::Constant(batch, model.y0(0));
        if (problem_.fully_nonlinear()) {
            out.z = replicate_row(model.z0, batch);
            out.gamma = replicate_row(model.gamma0, batch);
        }
        return out;
    }
    const BatchNormConfig& bn = config_.batch_norm;
    out.y = infer(model.y_net, paths.values(), bn).col(0);
    if (problem_.fully_nonlinear()) {
        out.z = infer(*model.z_net, paths.values(), bn);
        out.gamma = infer(*model.gamma_net, paths.values(), bn);
    }
    return out;
}

template <typename Real>
Vector<Real> Solver<Real>::v_hat(int step, const PathBatch<Real>& paths) const {
    if (step == config_.steps) {
        if (paths.known_steps() != step) {
            throw std::invalid_argument("Solver::v_hat: terminal needs complete paths");
        }
        Vector<Real> out(paths.batch());
        for (Eigen::Index j = 0; j < paths.batch(); ++j) {
            out(j) = problem_.terminal(paths.sample(j), grid_);
        }
        return out;
    }
    const StepOutputs<Real> o = outputs(step, paths);
    Matrix<Real> gamma_sym;
    if (problem_.fully_nonlinear()) gamma_sym = sym_batch(o.gamma, layout_);
    return assemble_v_hat(step, paths, o.y, o.z, gamma_sym, problem_);
}

template <typename Real>
double Solver<Real>::v0() const {
    const auto start = PathBatch<Real>::start(grid_, problem_.x0, 1);
    return static_cast<double>(v_hat(0, start)(0));
}

template <typename Real>
double Solver<Real>::train_step(int step, const LossTrace& trace) {
    const int n_steps = config_.steps;
    if (step < 0 || step >= n_steps) throw std::out_of_range("train_step: bad step");
    if (step + 1 < n_steps && !models_[static_cast<std::size_t>(step + 1)].trained) {
        throw std::logic_error("train_step: step " + std::to_string(step + 1) +
                               " must be trained first");
    }

    const int d = config_.dim;
    const Eigen::Index batch = config_.batch;
    const bool full = problem_.fully_nonlinear();
    const BatchNormConfig& bn = config_.batch_norm;
    const LrSchedule schedule{config_.train_steps, config_.learning_rates};

    const RngStream step_rng = RngStream(config_.seed).split(static_cast<std::uint64_t>(step));
    RngStream init_rng = step_rng.split(0);
    RngStream sim_rng = step_rng.split(1);

    StepModel<Real> model;
    model.step = step;
    model.constant = step == 0;

    const int width = config_.effective_width();
    const int layers = config_.hidden_layers;
    const int input_dim = (step + 1) * d;
    std::vector<AdamState<Real>> adam;
    if (model.constant) {
        model.y0 = uniform_vector<Real>(init_rng, 1, kConstantInitBound);
        adam.push_back(AdamState<Real>::zeros(1, config_.adam));
        if (full) {
            model.z0 = uniform_vector<Real>(init_rng, d, kConstantInitBound);
            model.gamma0 = uniform_vector<Real>(init_rng, layout_.input_size, kConstantInitBound);
            adam.push_back(AdamState<Real>::zeros(d, config_.adam));
            adam.push_back(AdamState<Real>::zeros(layout_.input_size, config_.adam));
        }
    } else {
        model.y_net = xavier_init<Real>(init_rng, input_dim, 1, layers, width, config_.activation);
        adam.push_back(AdamState<Real>::zeros(model.y_net.trainable_size(), config_.adam));
        if (full) {
            model.z_net = xavier_init<Real>(init_rng, input_dim, d, layers, width, config_.activation);
            model.gamma_net = xavier_init<Real>(init_rng, input_dim, layout_.input_size, layers,
                                                width, config_.activation);
            adam.push_back(AdamState<Real>::zeros(model.z_net->trainable_size(), config_.adam));
            adam.push_back(AdamState<Real>::zeros(model.gamma_net->trainable_size(), config_.adam));
        }
    }

    double last_loss = 0.0;
    for (long p = 1; p <= config_.train_steps; ++p) {
        const SimulatedBatch<Real> sim = simulate(problem_, grid_, batch, step + 1, sim_rng);
        const Vector<Real> v_next = v_hat(step + 1, sim.paths);
        const WeightBatch<Real> weights = compute_weights(sim.last_increments, grid_.step);

        Vector<Real> y_out;
        Matrix<Real> z_out, gamma_out;
        ForwardPass<Real> y_pass, z_pass, gamma_pass;
        if (model.constant) {
            y_out = Vector<Real>::Constant(batch, model.y0(0));
            if (full) {
                z_out = replicate_row(model.z0, batch);
                gamma_out = replicate_row(model.gamma0, batch);
            }
        } else {
            const Matrix<Real> inputs = sim.paths.prefix(step);
            y_pass = forward(model.y_net, inputs, Mode::training, bn);
            y_out = y_pass.outputs.col(0);
            if (full) {
                z_pass = forward(*model.z_net, inputs, Mode::training, bn);
                gamma_pass = forward(*model.gamma_net, inputs, Mode::training, bn);
                z_out = z_pass.outputs;
                gamma_out = gamma_pass.outputs;
            }
        }

        const TargetBatch<Real> targets =
            config_.variance_reduction
                ? variance_reduced_targets(v_next, y_out,
                                           full ? std::optional<Matrix<Real>>(z_out) : std::nullopt,
                                           sim.last_increments, weights, full, full)
                : plain_targets(v_next, weights, full, full);
        const StepLoss<Real> loss = step_loss(targets, y_out, z_out, gamma_out, layout_);
        if (!std::isfinite(loss.loss)) {
            throw NumericError("non-finite loss at time step " + std::to_string(step) +
                               ", iteration " + std::to_string(p));
        }
        last_loss = loss.loss;
        const double lr = lr_at(schedule, p);

        if (model.constant) {
            adam_step(adam[0], model.y0, Vector<Real>(Vector<Real>::Constant(1, loss.d_y.sum())), lr);
            if (full) {
                adam_step(adam[1], model.z0, Vector<Real>(loss.d_z.colwise().sum().transpose()), lr);
                adam_step(adam[2], model.gamma0,
                          Vector<Real>(loss.d_gamma.colwise().sum().transpose()), lr);
            }
        } else {
            const Matrix<Real> sens_y = loss.d_y;
            update_network(model.y_net, adam[0], backward(model.y_net, y_pass, sens_y), lr);
            commit_running_stats(model.y_net, y_pass, bn);
            if (full) {
                update_network(*model.z_net, adam[1], backward(*model.z_net, z_pass, loss.d_z), lr);
                commit_running_stats(*model.z_net, z_pass, bn);
                update_network(*model.gamma_net, adam[2],
                               backward(*model.gamma_net, gamma_pass, loss.d_gamma), lr);
                commit_running_stats(*model.gamma_net, gamma_pass, bn);
            }
        }
        if (trace) trace(step, p, loss.loss, lr);
    }

    model.trained = true;
    models_[static_cast<std::size_t>(step)] = std::move(model);
    losses_[static_cast<std::size_t>(step)] = last_loss;
    return last_loss;
}

template <typename Real>
SolverResult Solver<Real>::solve(const LossTrace& trace) {
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = config_.steps - 1; i >= 0; --i) train_step(i, trace);
    SolverResult result;
    result.v0 = v0();
    result.step_losses = losses_;
    result.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.seed = config_.seed;
    result.config = config_;
    return result;
}

namespace {

template <typename Real>
SolverResult solve_as(const SchemeConfig& config, const LossTrace& trace) {
    ProblemSpec<Real> problem = make_problem<Real>(config.problem, config.dim, config.problem_params);
    RngStream check_rng = RngStream(config.seed).split(~std::uint64_t{0});
    check_problem(problem, config.grid(), check_rng);
    Solver<Real> solver(config, std::move(problem));
    return solver.solve(trace);
}

}  // namespace

SolverResult solve(const SchemeConfig& config, const LossTrace& trace) {
    config.validate();
    if (config.precision == Precision::f32) return solve_as<float>(config, trace);
    return solve_as<double>(config, trace);
}

#define PPDE_INSTANTIATE_SCHEME(Real)                                                           \
    template Matrix<Real> sym(const RowVector<Real>&, int, SymVariant);                         \
    template Matrix<Real> sym_batch(const Matrix<Real>&, const SymLayout&);                     \
    template Vector<Real> assemble_v_hat(int, const PathBatch<Real>&, const Vector<Real>&,      \
                                         const Matrix<Real>&, const Matrix<Real>&,              \
                                         const ProblemSpec<Real>&);                             \
    template StepLoss<Real> step_loss(const TargetBatch<Real>&, const Vector<Real>&,            \
                                      const Matrix<Real>&, const Matrix<Real>&,                 \
                                      const SymLayout&);                                        \
    template class Solver<Real>;

PPDE_INSTANTIATE_SCHEME(float)
PPDE_INSTANTIATE_SCHEME(double)

}  // namespace ppde
