#pragma once

// Central finite-difference check of network backprop, shared by the unit
// tests and the acceptance runner.

#include "ppde/network.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace ppde::testing {

struct GradientCheck {
    double global_relative = 0.0;  // |fd - bp| / max(|fd|, |bp|) over all parameters
    double worst_tensor = 0.0;     // same per tensor, denominators floored at 1e-3
};

inline std::vector<Eigen::Index> tensor_sizes(const NetworkParams<double>& p) {
    std::vector<Eigen::Index> sizes{p.input_bn.scale.size(), p.input_bn.shift.size()};
    for (const auto& layer : p.layers) {
        sizes.push_back(layer.weight.size());
        sizes.push_back(layer.bias.size());
        sizes.push_back(layer.bn.scale.size());
        sizes.push_back(layer.bn.shift.size());
    }
    return sizes;
}

/// Compares backward() with central differences of sum(S .* forward(x)).
inline GradientCheck check_gradient(const NetworkParams<double>& params,
                                    const Matrix<double>& inputs, const Matrix<double>& sens,
                                    Mode mode, const BatchNormConfig& bn, double step = 1e-6) {
    const ForwardPass<double> pass = forward(params, inputs, mode, bn);
    const Vector<double> analytic = backward(params, pass, sens).pack();

    NetworkParams<double> probe = params;
    const Vector<double> base = params.pack();
    Vector<double> numeric(base.size());
    auto loss = [&](const Vector<double>& flat) {
        probe.unpack(flat);
        return (forward(probe, inputs, mode, bn).outputs.array() * sens.array()).sum();
    };
    for (Eigen::Index k = 0; k < base.size(); ++k) {
        Vector<double> plus = base, minus = base;
        plus(k) += step;
        minus(k) -= step;
        numeric(k) = (loss(plus) - loss(minus)) / (2.0 * step);
    }

    GradientCheck out;
    out.global_relative = (numeric - analytic).norm() /
                          std::max({numeric.norm(), analytic.norm(), 1e-300});
    Eigen::Index offset = 0;
    for (Eigen::Index size : tensor_sizes(params)) {
        const auto a = analytic.segment(offset, size);
        const auto n = numeric.segment(offset, size);
        const double denom = std::max({a.norm(), n.norm(), 1e-3});
        out.worst_tensor = std::max(out.worst_tensor, (a - n).norm() / denom);
        offset += size;
    }
    return out;
}

/// Random running statistics so the inference branch is not the identity.
inline void randomize_running_stats(NetworkParams<double>& p, RngStream& rng) {
    auto fill = [&](BatchNormParams<double>& bn) {
        for (Eigen::Index k = 0; k < bn.running_mean.size(); ++k) {
            bn.running_mean(k) = rng.uniform(-0.5, 0.5);
            bn.running_var(k) = rng.uniform(0.5, 2.0);
            bn.scale(k) = rng.uniform(0.5, 1.5);
            bn.shift(k) = rng.uniform(-0.3, 0.3);
        }
    };
    fill(p.input_bn);
    for (auto& layer : p.layers) {
        fill(layer.bn);
        for (Eigen::Index k = 0; k < layer.bias.size(); ++k) layer.bias(k) = rng.uniform(-0.2, 0.2);
    }
}

}  // namespace ppde::testing
