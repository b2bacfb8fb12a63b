#pragma once

#include "ppde/tensor.hpp"

#include <array>
#include <string>
#include <type_traits>

namespace ppde {

/// `standard` is Kingma-Ba Adam with bias corrections 1 - beta^p.
/// `paper` divides both moments by (1 - beta1) with no step power, the rule
/// as printed alongside the benchmark tables; kept for comparison runs.
enum class AdamVariant { standard, paper };

AdamVariant parse_adam_variant(const std::string& name);
std::string to_string(AdamVariant variant);

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    AdamVariant variant = AdamVariant::standard;
};

template <typename Real>
struct AdamState {
    Vector<Real> first;   // v
    Vector<Real> second;  // w
    long step = 0;        // p
    AdamHyper hyper;

    static AdamState zeros(Eigen::Index size, AdamHyper hyper = {});
};

/// Piecewise-constant rate over P steps: values[0] while 3p < 2P,
/// values[1] while 6p < 5P, values[2] afterwards.
struct LrSchedule {
    long total_steps = 1;
    std::array<double, 3> values{0.1, 0.01, 0.001};

    /// First step at which each of values[1], values[2] applies.
    std::array<long, 2> boundaries() const;
};

double lr_at(const LrSchedule& schedule, long p);

/// One Adam update in place. Throws NumericError (leaving state and params
/// untouched) when the gradient is not finite.
template <typename Real>
void adam_step(AdamState<Real>& state, Vector<Real>& params,
               const std::type_identity_t<Vector<Real>>& gradient,
               double learning_rate);

}  // namespace ppde
