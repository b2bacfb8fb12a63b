#include "ppde/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace ppde {

AdamVariant parse_adam_variant(const std::string& name) {
    if (name == "standard") return AdamVariant::standard;
    if (name == "paper") return AdamVariant::paper;
    throw std::invalid_argument("unknown Adam variant '" + name + "' (standard|paper)");
}

std::string to_string(AdamVariant variant) {
    return variant == AdamVariant::paper ? "paper" : "standard";
}

template <typename Real>
AdamState<Real> AdamState<Real>::zeros(Eigen::Index size, AdamHyper hyper) {
    return {Vector<Real>::Zero(size), Vector<Real>::Zero(size), 0, hyper};
}

std::array<long, 2> LrSchedule::boundaries() const {
    // ceil(2P/3), ceil(5P/6)
    return {(2 * total_steps + 2) / 3, (5 * total_steps + 5) / 6};
}

double lr_at(const LrSchedule& schedule, long p) {
    if (p < 1 || p > schedule.total_steps) {
        throw std::invalid_argument("lr_at: step " + std::to_string(p) + " outside [1, " +
                                    std::to_string(schedule.total_steps) + "]");
    }
    const long total = schedule.total_steps;
    if (3 * p < 2 * total) return schedule.values[0];
    if (6 * p < 5 * total) return schedule.values[1];
    return schedule.values[2];
}

template <typename Real>
void adam_step(AdamState<Real>& state, Vector<Real>& params,
               const std::type_identity_t<Vector<Real>>& gradient,
               double learning_rate) {
    if (gradient.size() != params.size() || state.first.size() != params.size() ||
        state.second.size() != params.size()) {
        throw std::invalid_argument("adam_step: shape mismatch");
    }
    if (!(learning_rate > 0.0)) throw std::invalid_argument("adam_step: learning rate <= 0");
    if (!gradient.allFinite()) throw NumericError("adam_step: non-finite gradient");

    const AdamHyper& hp = state.hyper;
    const auto b1 = static_cast<Real>(hp.beta1);
    const auto b2 = static_cast<Real>(hp.beta2);
    state.first = b1 * state.first + (Real(1) - b1) * gradient;
    state.second = b2 * state.second + (Real(1) - b2) * gradient.cwiseAbs2();
    ++state.step;

    double first_correction = 1.0;
    double second_correction = 1.0;
    if (hp.variant == AdamVariant::standard) {
        first_correction = 1.0 - std::pow(hp.beta1, static_cast<double>(state.step));
        second_correction = 1.0 - std::pow(hp.beta2, static_cast<double>(state.step));
    } else {
        first_correction = 1.0 - hp.beta1;
        second_correction = 1.0 - hp.beta1;
    }
    const auto lr = static_cast<Real>(learning_rate);
    const auto eps = static_cast<Real>(hp.epsilon);
    const auto c1 = static_cast<Real>(first_correction);
    const auto c2 = static_cast<Real>(second_correction);
    params.array() -=
        lr * (state.first.array() / c1) / (eps + (state.second.array() / c2).sqrt());
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(AdamState<float>&, Vector<float>&, const Vector<float>&, double);
template void adam_step(AdamState<double>&, Vector<double>&, const Vector<double>&, double);

}  // namespace ppde
