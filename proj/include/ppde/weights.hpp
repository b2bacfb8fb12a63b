#pragma once

#include "ppde/tensor.hpp"

#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace ppde {

/// Monte Carlo weights of one time step, per sample:
///   H0 = 1,  H1 = B_h / h,  H2 = (B_h B_h^T - h I) / h^2.
/// H2 is stored flattened (batch x d*d, row-major per sample).
template <typename Real>
struct WeightBatch {
    int dim = 0;
    double step = 0.0;
    Matrix<Real> h1;
    Matrix<Real> h2;

    static constexpr Real h0() { return Real(1); }
    Eigen::Index batch() const { return h1.rows(); }
};

template <typename Real>
WeightBatch<Real> compute_weights(const Matrix<Real>& increments, double h);

/// Regression targets for the Y, Z and Gamma networks of one step. Gamma
/// targets are flattened symmetric d x d matrices.
template <typename Real>
struct TargetBatch {
    Vector<Real> y;
    Matrix<Real> z;
    Matrix<Real> g;
    bool has_z = false;
    bool has_g = false;
};

/// y = v H0, z = v H1, g = v H2.
template <typename Real>
TargetBatch<Real> plain_targets(const Vector<Real>& v_next, const WeightBatch<Real>& weights,
                                bool need_z, bool need_g);

/// Control-variate targets: y = v, z = (v - y_now) H1,
/// g = (v - y_now - z_now . B_h) H2. y_now and z_now enter as constants.
template <typename Real>
TargetBatch<Real> variance_reduced_targets(const Vector<Real>& v_next, const Vector<Real>& y_now,
                                           const std::optional<Matrix<Real>>& z_now,
                                           const Matrix<Real>& increments,
                                           const WeightBatch<Real>& weights, bool need_z,
                                           bool need_g);

/// One atom of a finite distribution for B_h.
struct NoiseAtom {
    Vector<double> value;
    double probability = 0.0;
};

struct WeightedMoments {
    double y = 0.0;
    Vector<double> z;
    Matrix<double> g;
};

/// Exact E[phi(x0 + sigma B) H_k], k = 0, 1, 2, by enumerating a finite noise
/// law (at most 32 atoms, d <= 2). Test oracle for the regression targets.
WeightedMoments conditional_expectation_oracle(
    const std::function<double(const Vector<double>&)>& phi, const Vector<double>& x0,
    const Matrix<double>& sigma, std::span<const NoiseAtom> noise, double h);

}  // namespace ppde
