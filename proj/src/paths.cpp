#include "ppde/paths.hpp"

#include <cmath>
#include <ostream>
#include <string>

namespace ppde {

TimeGrid TimeGrid::with_steps(double horizon, int steps) {
    if (steps < 1) throw std::invalid_argument("TimeGrid: need at least one step");
    if (!(horizon > 0.0)) throw std::invalid_argument("TimeGrid: horizon must be positive");
    return TimeGrid{horizon, steps, horizon / steps};
}

TimeGrid TimeGrid::with_step(double horizon, double step) {
    if (!(step > 0.0) || !(horizon > 0.0)) {
        throw std::invalid_argument("TimeGrid: horizon and step must be positive");
    }
    const double ratio = horizon / step;
    const double steps = std::round(ratio);
    if (steps < 1.0 || std::abs(ratio - steps) > 1e-9 * steps) {
        throw std::invalid_argument("TimeGrid: horizon " + std::to_string(horizon) +
                                    " is not a whole number of steps of size " +
                                    std::to_string(step));
    }
    return with_steps(horizon, static_cast<int>(steps));
}

template <typename Real>
PathBatch<Real>::PathBatch(TimeGrid grid, int dim, Matrix<Real> values)
    : grid_(grid), dim_(dim), values_(std::move(values)) {
    if (dim_ < 1) throw std::invalid_argument("PathBatch: dimension must be >= 1");
    if (values_.cols() == 0 || values_.cols() % dim_ != 0) {
        throw std::invalid_argument("PathBatch: column count is not a multiple of d");
    }
    if (known_steps() > grid_.steps) {
        throw std::invalid_argument("PathBatch: more points than the grid holds");
    }
}

template <typename Real>
PathBatch<Real> PathBatch<Real>::start(const TimeGrid& grid, const Vector<Real>& x0,
                                       Eigen::Index batch) {
    if (batch < 1) throw std::invalid_argument("PathBatch: empty batch");
    Matrix<Real> values = x0.transpose().replicate(batch, 1);
    return PathBatch(grid, static_cast<int>(x0.size()), std::move(values));
}

template <typename Real>
Matrix<Real> PathBatch<Real>::prefix(int k) const {
    if (k < 0 || k > known_steps()) throw std::invalid_argument("PathBatch::prefix: bad index");
    return values_.leftCols(static_cast<Eigen::Index>(k + 1) * dim_);
}

template <typename Real>
PathBatch<Real> euler_step(const PathBatch<Real>& batch,
                           const std::type_identity_t<Matrix<Real>>& drift,
                           const DiffusionEval<Real>& diffusion,
                           const std::type_identity_t<Matrix<Real>>& increments) {
    const Eigen::Index n = batch.batch();
    const int d = batch.dim();
    const Eigen::Index diffusion_cols =
        diffusion.kind == DiffusionKind::diagonal ? d : static_cast<Eigen::Index>(d) * d;
    if (drift.rows() != n || drift.cols() != d || increments.rows() != n ||
        increments.cols() != d || diffusion.values.rows() != n ||
        diffusion.values.cols() != diffusion_cols) {
        throw std::invalid_argument("euler_step: shape mismatch");
    }
    if (batch.known_steps() >= batch.grid().steps) {
        throw std::invalid_argument("euler_step: path already spans the full grid");
    }
    const Real h = static_cast<Real>(batch.grid().step);
    const Eigen::Index old_cols = batch.values().cols();

    Matrix<Real> values(n, old_cols + d);
    values.leftCols(old_cols) = batch.values();
    for (Eigen::Index j = 0; j < n; ++j) {
        if (!drift.row(j).allFinite() || !diffusion.values.row(j).allFinite()) {
            throw NumericError("euler_step: non-finite drift/diffusion at sample " +
                               std::to_string(j));
        }
        const Real* last = batch.values().row(j).data() + old_cols - d;
        Real* next = values.row(j).data() + old_cols;
        const Real* dw = increments.row(j).data();
        const Real* sig = diffusion.values.row(j).data();
        for (int a = 0; a < d; ++a) {
            Real noise = 0;
            if (diffusion.kind == DiffusionKind::diagonal) {
                noise = sig[a] * dw[a];
            } else {
                for (int b = 0; b < d; ++b) noise += sig[a * d + b] * dw[b];
            }
            next[a] = last[a] + drift(j, a) * h + noise;
        }
    }
    return PathBatch<Real>(batch.grid(), d, std::move(values));
}

template <typename Real>
RowVector<Real> interpolate(PathRef<Real> points, const TimeGrid& grid, double s) {
    if (points.rows() < 1) throw std::invalid_argument("interpolate: no points");
    if (!(s >= 0.0) || s > grid.horizon * (1.0 + 1e-12)) {
        throw std::invalid_argument("interpolate: query time outside [0, T]");
    }
    const int last = static_cast<int>(points.rows()) - 1;
    const double h = grid.step;
    // Snap to a node first so node values come back bit-exactly.
    const double nearest = std::round(s / h);
    if (std::abs(s - nearest * h) <= 1e-12 * std::max(1.0, s)) {
        const int k = std::min(static_cast<int>(nearest), last);
        return points.row(k);
    }
    const int k = static_cast<int>(std::floor(s / h));
    if (k >= last) return points.row(last);
    const auto lambda = static_cast<Real>((s - k * h) / h);
    return (Real(1) - lambda) * points.row(k) + lambda * points.row(k + 1);
}

template <typename Real>
RowVector<Real> trapezoid_integral(PathRef<Real> points, const TimeGrid& grid) {
    if (points.rows() < 1) throw std::invalid_argument("trapezoid_integral: no points");
    if (points.rows() == 1) return RowVector<Real>::Zero(points.cols());
    const auto h = static_cast<Real>(grid.step);
    const Eigen::Index last = points.rows() - 1;
    RowVector<Real> total = (points.row(0) + points.row(last)) / Real(2);
    for (Eigen::Index k = 1; k < last; ++k) total += points.row(k);
    return h * total;
}

template <typename Real>
Real running_max_mean(PathRef<Real> points) {
    if (points.rows() < 1 || points.cols() < 1) {
        throw std::invalid_argument("running_max_mean: empty path");
    }
    return points.rowwise().mean().maxCoeff();
}

template <typename Real>
void write_paths_csv(std::ostream& out, const PathBatch<Real>& batch) {
    out << "sample,step";
    for (int a = 1; a <= batch.dim(); ++a) out << ",x_" << a;
    out << '\n';
    out.precision(17);
    for (Eigen::Index j = 0; j < batch.batch(); ++j) {
        const auto path = batch.sample(j);
        for (Eigen::Index k = 0; k < path.rows(); ++k) {
            out << j << ',' << k;
            for (Eigen::Index a = 0; a < path.cols(); ++a) out << ',' << path(k, a);
            out << '\n';
        }
    }
}

#define PPDE_INSTANTIATE_PATHS(Real)                                                          \
    template class PathBatch<Real>;                                                          \
    template PathBatch<Real> euler_step(const PathBatch<Real>&, const Matrix<Real>&,          \
                                        const DiffusionEval<Real>&, const Matrix<Real>&);    \
    template RowVector<Real> interpolate(PathRef<Real>, const TimeGrid&, double);            \
    template RowVector<Real> trapezoid_integral(PathRef<Real>, const TimeGrid&);             \
    template Real running_max_mean(PathRef<Real>);                                           \
    template void write_paths_csv(std::ostream&, const PathBatch<Real>&);

PPDE_INSTANTIATE_PATHS(float)
PPDE_INSTANTIATE_PATHS(double)

}  // namespace ppde
