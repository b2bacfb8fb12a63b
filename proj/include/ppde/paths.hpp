#pragma once

#include "ppde/tensor.hpp"

#include <iosfwd>
#include <type_traits>

namespace ppde {

/// Uniform grid 0, h, 2h, ..., N h = T.
struct TimeGrid {
    double horizon = 0.0;
    int steps = 1;
    double step = 0.0;

    static TimeGrid with_steps(double horizon, int steps);
    /// Derives N = T / h; throws if T is not a whole number of steps.
    static TimeGrid with_step(double horizon, double step);

    double time(int k) const { return k * step; }
};

/// One path prefix: (k+1) rows, one grid point per row, d columns.
template <typename Real>
using PathRef = Eigen::Ref<const Matrix<Real>>;

/// A batch of discretized paths. Row j of `values` is the flattened prefix
/// (x_0, x_1, ..., x_i) of sample j, i.e. exactly the (i+1)d regression input.
template <typename Real>
class PathBatch {
public:
    PathBatch(TimeGrid grid, int dim, Matrix<Real> values);

    /// Every sample sits at `x0` at grid index 0.
    static PathBatch start(const TimeGrid& grid, const Vector<Real>& x0, Eigen::Index batch);

    const TimeGrid& grid() const { return grid_; }
    int dim() const { return dim_; }
    Eigen::Index batch() const { return values_.rows(); }
    int known_steps() const { return static_cast<int>(values_.cols() / dim_) - 1; }
    const Matrix<Real>& values() const { return values_; }

    /// (known_steps+1) x d view of one sample.
    Eigen::Map<const Matrix<Real>> sample(Eigen::Index j) const {
        return Eigen::Map<const Matrix<Real>>(values_.row(j).data(), known_steps() + 1, dim_);
    }
    /// Last known grid point of every sample (batch x d).
    Matrix<Real> last_points() const { return values_.rightCols(dim_); }
    /// Flattened prefix up to grid index k (batch x (k+1)d).
    Matrix<Real> prefix(int k) const;

private:
    TimeGrid grid_;
    int dim_;
    Matrix<Real> values_;
};

enum class DiffusionKind { diagonal, full };

/// Per-sample diffusion evaluations: batch x d (diagonal) or batch x d*d
/// (full, row-major d x d per sample).
template <typename Real>
struct DiffusionEval {
    DiffusionKind kind = DiffusionKind::diagonal;
    Matrix<Real> values;
};

/// Appends x_{i+1} = x_i + b h + sigma B_h to every sample.
template <typename Real>
PathBatch<Real> euler_step(const PathBatch<Real>& batch,
                           const std::type_identity_t<Matrix<Real>>& drift,
                           const DiffusionEval<Real>& diffusion,
                           const std::type_identity_t<Matrix<Real>>& increments);

/// Linear interpolation of the known points at time s, flat after the last one.
template <typename Real>
RowVector<Real> interpolate(PathRef<Real> points, const TimeGrid& grid, double s);

/// Trapezoid rule over the known points; the zero vector for a single point.
template <typename Real>
RowVector<Real> trapezoid_integral(PathRef<Real> points, const TimeGrid& grid);

/// max over grid points of the cross-dimension mean.
template <typename Real>
Real running_max_mean(PathRef<Real> points);

/// Debug dump: header `sample,step,x_1..x_d`, one row per sample per step.
template <typename Real>
void write_paths_csv(std::ostream& out, const PathBatch<Real>& batch);

}  // namespace ppde
