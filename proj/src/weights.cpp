#include "ppde/weights.hpp"

#include <cmath>
#include <string>

namespace ppde {

template <typename Real>
WeightBatch<Real> compute_weights(const Matrix<Real>& increments, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("compute_weights: step must be positive");
    const Eigen::Index n = increments.rows();
    const auto d = static_cast<int>(increments.cols());
    const auto inv_h = static_cast<Real>(1.0 / h);
    const auto inv_h2 = static_cast<Real>(1.0 / (h * h));
    const auto hr = static_cast<Real>(h);

    WeightBatch<Real> w;
    w.dim = d;
    w.step = h;
    w.h1 = increments * inv_h;
    w.h2.resize(n, static_cast<Eigen::Index>(d) * d);
    for (Eigen::Index j = 0; j < n; ++j) {
        const Real* b = increments.row(j).data();
        Real* out = w.h2.row(j).data();
        for (int a = 0; a < d; ++a) {
            out[a * d + a] = (b[a] * b[a] - hr) * inv_h2;
            for (int c = a + 1; c < d; ++c) {
                const Real v = b[a] * b[c] * inv_h2;
                out[a * d + c] = v;
                out[c * d + a] = v;
            }
        }
    }
    return w;
}

template <typename Real>
TargetBatch<Real> plain_targets(const Vector<Real>& v_next, const WeightBatch<Real>& weights,
                                bool need_z, bool need_g) {
    if (v_next.size() != weights.batch()) {
        throw std::invalid_argument("plain_targets: batch size mismatch");
    }
    if (!v_next.allFinite()) throw NumericError("plain_targets: non-finite continuation value");
    TargetBatch<Real> t;
    t.y = v_next;
    t.has_z = need_z;
    t.has_g = need_g;
    if (need_z) t.z = weights.h1.array().colwise() * v_next.array();
    if (need_g) t.g = weights.h2.array().colwise() * v_next.array();
    return t;
}

template <typename Real>
TargetBatch<Real> variance_reduced_targets(const Vector<Real>& v_next, const Vector<Real>& y_now,
                                           const std::optional<Matrix<Real>>& z_now,
                                           const Matrix<Real>& increments,
                                           const WeightBatch<Real>& weights, bool need_z,
                                           bool need_g) {
    const Eigen::Index n = weights.batch();
    if (v_next.size() != n || y_now.size() != n || increments.rows() != n ||
        increments.cols() != weights.dim) {
        throw std::invalid_argument("variance_reduced_targets: shape mismatch");
    }
    if (need_g && !z_now) {
        throw std::invalid_argument(
            "variance_reduced_targets: the Gamma target needs the Z control variate");
    }
    if (z_now && (z_now->rows() != n || z_now->cols() != weights.dim)) {
        throw std::invalid_argument("variance_reduced_targets: z_now shape mismatch");
    }
    if (!v_next.allFinite()) {
        throw NumericError("variance_reduced_targets: non-finite continuation value");
    }
    TargetBatch<Real> t;
    t.y = v_next;
    t.has_z = need_z;
    t.has_g = need_g;
    const Vector<Real> residual = v_next - y_now;
    if (need_z) t.z = weights.h1.array().colwise() * residual.array();
    if (need_g) {
        const Vector<Real> second =
            residual - (z_now->array() * increments.array()).rowwise().sum().matrix();
        t.g = weights.h2.array().colwise() * second.array();
    }
    return t;
}

WeightedMoments conditional_expectation_oracle(
    const std::function<double(const Vector<double>&)>& phi, const Vector<double>& x0,
    const Matrix<double>& sigma, std::span<const NoiseAtom> noise, double h) {
    if (noise.size() > 32) {
        throw std::invalid_argument("conditional_expectation_oracle: support larger than 32");
    }
    const Eigen::Index d = x0.size();
    if (d > 2) throw std::invalid_argument("conditional_expectation_oracle: d must be <= 2");
    if (sigma.rows() != d || sigma.cols() != d) {
        throw std::invalid_argument("conditional_expectation_oracle: sigma shape mismatch");
    }
    if (!(h > 0.0)) throw std::invalid_argument("conditional_expectation_oracle: h <= 0");

    WeightedMoments m;
    m.z = Vector<double>::Zero(d);
    m.g = Matrix<double>::Zero(d, d);
    for (const NoiseAtom& atom : noise) {
        if (atom.value.size() != d) {
            throw std::invalid_argument("conditional_expectation_oracle: atom dimension");
        }
        const double value = phi(x0 + sigma * atom.value);
        const double weight = atom.probability * value;
        m.y += weight;
        m.z += weight * atom.value / h;
        m.g += weight * (atom.value * atom.value.transpose() -
                         h * Matrix<double>::Identity(d, d)) / (h * h);
    }
    return m;
}

#define PPDE_INSTANTIATE_WEIGHTS(Real)                                                        \
    template WeightBatch<Real> compute_weights(const Matrix<Real>&, double);                 \
    template TargetBatch<Real> plain_targets(const Vector<Real>&, const WeightBatch<Real>&,  \
                                             bool, bool);                                    \
    template TargetBatch<Real> variance_reduced_targets(                                     \
        const Vector<Real>&, const Vector<Real>&, const std::optional<Matrix<Real>>&,        \
        const Matrix<Real>&, const WeightBatch<Real>&, bool, bool);

PPDE_INSTANTIATE_WEIGHTS(float)
PPDE_INSTANTIATE_WEIGHTS(double)

}  // namespace ppde
