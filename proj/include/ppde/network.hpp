#pragma once

#include "ppde/tensor.hpp"

#include <filesystem>
#include <string>
#include <type_traits>
#include <vector>

namespace ppde {

enum class Activation { relu, tanh, identity };

Activation parse_activation(const std::string& name);
std::string to_string(Activation activation);

enum class Mode { training, inference };

struct BatchNormConfig {
    double epsilon = 1e-6;
    /// Weight of the old value in the running-statistics moving average.
    double momentum = 0.99;
};

template <typename Real>
struct BatchNormParams {
    Vector<Real> scale;
    Vector<Real> shift;
    Vector<Real> running_mean;
    Vector<Real> running_var;

    /// scale 1, shift 0, running statistics (0, 1).
    static BatchNormParams identity(Eigen::Index size);
};

template <typename Real>
struct LayerParams {
    Matrix<Real> weight;  // d_out x d_in
    Vector<Real> bias;
    BatchNormParams<Real> bn;
};

/// Feed-forward network
///   BN -> (dense -> BN -> activation) x l -> dense -> BN
/// with `hidden_layers` hidden layers of `width` neurons and an identity
/// output activation. A value of this type also carries gradients (same
/// shape; running statistics unused).
template <typename Real>
struct NetworkParams {
    int input_dim = 0;
    int output_dim = 0;
    int hidden_layers = 0;
    int width = 0;
    Activation activation = Activation::relu;
    BatchNormParams<Real> input_bn;
    std::vector<LayerParams<Real>> layers;

    /// Trainable values in checkpoint order: input (scale, shift), then per
    /// layer (W, b, scale, shift).
    Eigen::Index trainable_size() const;
    Vector<Real> pack() const;
    void unpack(const Vector<Real>& flat);
    NetworkParams zeros_like() const;
};

/// (d0+1)m + (l-1)(m+1)m + (m+1)d1 dense parameters; with `with_batch_norm`
/// also the scale/shift pairs of every normalized vector (input included).
long long param_count(int input_dim, int output_dim, int hidden_layers, int width,
                      bool with_batch_norm = false);

/// Glorot-uniform weights on +-sqrt(6 / (fan_in + fan_out)); zero biases;
/// identity batch norm.
template <typename Real>
NetworkParams<Real> xavier_init(RngStream& rng, int input_dim, int output_dim,
                                int hidden_layers, int width, Activation activation);

template <typename Real>
struct BatchNormCache {
    Matrix<Real> normalized;
    RowVector<Real> inv_std;
    RowVector<Real> batch_mean;
    RowVector<Real> batch_var;
};

template <typename Real>
struct LayerCache {
    Matrix<Real> input;
    BatchNormCache<Real> bn;
    Matrix<Real> pre_activation;
};

template <typename Real>
struct ForwardPass {
    Matrix<Real> outputs;
    Mode mode = Mode::inference;
    BatchNormCache<Real> input_bn;
    std::vector<LayerCache<Real>> layers;
};

template <typename Real>
ForwardPass<Real> forward(const NetworkParams<Real>& params,
                          const std::type_identity_t<Matrix<Real>>& inputs, Mode mode, const BatchNormConfig& bn);

/// Inference-mode outputs only (no cache kept).
template <typename Real>
Matrix<Real> infer(const NetworkParams<Real>& params,
                   const std::type_identity_t<Matrix<Real>>& inputs, const BatchNormConfig& bn);

/// Folds the batch statistics of a training-mode pass into the running
/// statistics. No-op for inference passes.
template <typename Real>
void commit_running_stats(NetworkParams<Real>& params, const ForwardPass<Real>& pass,
                          const BatchNormConfig& bn);

/// Reverse-mode gradient of sum(output_sensitivity .* outputs) w.r.t. every
/// trainable parameter.
template <typename Real>
NetworkParams<Real> backward(const NetworkParams<Real>& params, const ForwardPass<Real>& pass,
                             const std::type_identity_t<Matrix<Real>>& output_sensitivity);

template <typename Real>
std::string checkpoint_to_json(const NetworkParams<Real>& params);
template <typename Real>
NetworkParams<Real> checkpoint_from_json(const std::string& text);

template <typename Real>
void save_checkpoint(const NetworkParams<Real>& params, const std::filesystem::path& path);
template <typename Real>
NetworkParams<Real> load_checkpoint(const std::filesystem::path& path);

}  // namespace ppde
