#include "ppde/network.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace ppde {

namespace {

constexpr int kCheckpointVersion = 1;

template <typename Real>
void apply_activation(Activation act, Matrix<Real>& m) {
    switch (act) {
        case Activation::relu: m = m.cwiseMax(Real(0)); break;
        case Activation::tanh: m = m.array().tanh().matrix(); break;
        case Activation::identity: break;
    }
}

// dL/dpre given dL/dpost and the cached pre-activation.
template <typename Real>
Matrix<Real> activation_backward(Activation act, const Matrix<Real>& pre,
                                 const Matrix<Real>& grad) {
    switch (act) {
        case Activation::relu:
            return (pre.array() > Real(0)).select(grad.array(), Real(0)).matrix();
        case Activation::tanh:
            return (grad.array() * (Real(1) - pre.array().tanh().square())).matrix();
        case Activation::identity: break;
    }
    return grad;
}

template <typename Real>
Matrix<Real> batch_norm_forward(const BatchNormParams<Real>& p, const Matrix<Real>& x, Mode mode,
                                const BatchNormConfig& cfg, BatchNormCache<Real>* cache) {
    const auto eps = static_cast<Real>(cfg.epsilon);
    RowVector<Real> mean;
    RowVector<Real> var;
    if (mode == Mode::training) {
        mean = x.colwise().mean();
        var = (x.rowwise() - mean).array().square().colwise().mean().matrix();
    } else {
        mean = p.running_mean.transpose();
        var = p.running_var.transpose();
    }
    const RowVector<Real> inv_std = (var.array() + eps).rsqrt().matrix();
    Matrix<Real> normalized = ((x.rowwise() - mean).array().rowwise() * inv_std.array()).matrix();
    Matrix<Real> out = ((normalized.array().rowwise() * p.scale.transpose().array()).rowwise() +
                        p.shift.transpose().array())
                           .matrix();
    if (cache) {
        cache->normalized = std::move(normalized);
        cache->inv_std = inv_std;
        cache->batch_mean = std::move(mean);
        cache->batch_var = std::move(var);
    }
    return out;
}

// Returns dL/dx; accumulates dL/dscale, dL/dshift into `grad`.
template <typename Real>
Matrix<Real> batch_norm_backward(const BatchNormParams<Real>& p, const BatchNormCache<Real>& c,
                                 Mode mode, const Matrix<Real>& dy, BatchNormParams<Real>& grad) {
    grad.shift = dy.colwise().sum().transpose();
    grad.scale = (dy.array() * c.normalized.array()).colwise().sum().matrix().transpose();
    const Matrix<Real> dxhat = (dy.array().rowwise() * p.scale.transpose().array()).matrix();
    if (mode == Mode::inference) {
        return (dxhat.array().rowwise() * c.inv_std.array()).matrix();
    }
    const auto n = static_cast<Real>(dy.rows());
    const RowVector<Real> sum_dxhat = dxhat.colwise().sum();
    const RowVector<Real> sum_dxhat_xhat =
        (dxhat.array() * c.normalized.array()).colwise().sum().matrix();
    Matrix<Real> centered = (n * dxhat).rowwise() - sum_dxhat;
    centered -= (c.normalized.array().rowwise() * sum_dxhat_xhat.array()).matrix();
    return ((centered.array().rowwise() * c.inv_std.array()) / n).matrix();
}

template <typename Real>
void check_finite(const Matrix<Real>& m, const std::string& where) {
    if (!m.allFinite()) throw NumericError("network forward: non-finite values in " + where);
}

template <typename Real>
Matrix<Real> run(const NetworkParams<Real>& params, const Matrix<Real>& inputs, Mode mode,
                 const BatchNormConfig& bn, ForwardPass<Real>* pass) {
    if (inputs.cols() != params.input_dim) {
        throw std::invalid_argument("network forward: expected " +
                                    std::to_string(params.input_dim) + " inputs, got " +
                                    std::to_string(inputs.cols()));
    }
    if (mode == Mode::training && inputs.rows() < 2) {
        throw std::invalid_argument("network forward: training mode needs a batch of >= 2");
    }
    if (pass) {
        pass->mode = mode;
        pass->layers.resize(params.layers.size());
    }
    Matrix<Real> x = batch_norm_forward(params.input_bn, inputs, mode, bn,
                                        pass ? &pass->input_bn : nullptr);
    check_finite(x, "input batch norm");
    const std::size_t last = params.layers.size() - 1;
    for (std::size_t k = 0; k < params.layers.size(); ++k) {
        const LayerParams<Real>& layer = params.layers[k];
        Matrix<Real> z = x * layer.weight.transpose();
        z.rowwise() += layer.bias.transpose();
        LayerCache<Real>* cache = pass ? &pass->layers[k] : nullptr;
        Matrix<Real> y = batch_norm_forward(layer.bn, z, mode, bn, cache ? &cache->bn : nullptr);
        check_finite(y, "layer " + std::to_string(k));
        if (cache) cache->input = std::move(x);
        if (k == last) {
            x = std::move(y);
        } else {
            x = y;
            apply_activation(params.activation, x);
            if (cache) cache->pre_activation = std::move(y);
        }
    }
    return x;
}

template <typename Real>
void check_shapes(const NetworkParams<Real>& p) {
    if (p.layers.size() != static_cast<std::size_t>(p.hidden_layers) + 1) {
        throw std::invalid_argument("NetworkParams: layer count mismatch");
    }
    Eigen::Index fan_in = p.input_dim;
    for (std::size_t k = 0; k < p.layers.size(); ++k) {
        const auto& layer = p.layers[k];
        const Eigen::Index fan_out = k + 1 == p.layers.size() ? p.output_dim : p.width;
        if (layer.weight.rows() != fan_out || layer.weight.cols() != fan_in ||
            layer.bias.size() != fan_out || layer.bn.scale.size() != fan_out ||
            layer.bn.shift.size() != fan_out || layer.bn.running_mean.size() != fan_out ||
            layer.bn.running_var.size() != fan_out) {
            throw std::invalid_argument("NetworkParams: inconsistent shapes in layer " +
                                        std::to_string(k));
        }
        fan_in = fan_out;
    }
}

}  // namespace

Activation parse_activation(const std::string& name) {
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    if (name == "identity") return Activation::identity;
    throw std::invalid_argument("unknown activation '" + name + "'");
}

std::string to_string(Activation activation) {
    switch (activation) {
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::identity: return "identity";
    }
    return "relu";
}

template <typename Real>
BatchNormParams<Real> BatchNormParams<Real>::identity(Eigen::Index size) {
    return {Vector<Real>::Ones(size), Vector<Real>::Zero(size), Vector<Real>::Zero(size),
            Vector<Real>::Ones(size)};
}

template <typename Real>
Eigen::Index NetworkParams<Real>::trainable_size() const {
    Eigen::Index n = input_bn.scale.size() + input_bn.shift.size();
    for (const auto& layer : layers) {
        n += layer.weight.size() + layer.bias.size() + layer.bn.scale.size() +
             layer.bn.shift.size();
    }
    return n;
}

template <typename Real>
Vector<Real> NetworkParams<Real>::pack() const {
    Vector<Real> flat(trainable_size());
    Eigen::Index at = 0;
    auto put = [&](const auto& block) {
        std::copy(block.data(), block.data() + block.size(), flat.data() + at);
        at += block.size();
    };
    put(input_bn.scale);
    put(input_bn.shift);
    for (const auto& layer : layers) {
        put(layer.weight);
        put(layer.bias);
        put(layer.bn.scale);
        put(layer.bn.shift);
    }
    return flat;
}

template <typename Real>
void NetworkParams<Real>::unpack(const Vector<Real>& flat) {
    if (flat.size() != trainable_size()) {
        throw std::invalid_argument("NetworkParams::unpack: size mismatch");
    }
    Eigen::Index at = 0;
    auto take = [&](auto& block) {
        std::copy(flat.data() + at, flat.data() + at + block.size(), block.data());
        at += block.size();
    };
    take(input_bn.scale);
    take(input_bn.shift);
    for (auto& layer : layers) {
        take(layer.weight);
        take(layer.bias);
        take(layer.bn.scale);
        take(layer.bn.shift);
    }
}

template <typename Real>
NetworkParams<Real> NetworkParams<Real>::zeros_like() const {
    NetworkParams out = *this;
    out.unpack(Vector<Real>::Zero(trainable_size()));
    out.input_bn.running_mean.setZero();
    out.input_bn.running_var.setZero();
    for (auto& layer : out.layers) {
        layer.bn.running_mean.setZero();
        layer.bn.running_var.setZero();
    }
    return out;
}

long long param_count(int input_dim, int output_dim, int hidden_layers, int width,
                      bool with_batch_norm) {
    if (input_dim < 1 || output_dim < 1 || hidden_layers < 1 || width < 1) {
        throw std::invalid_argument("param_count: dimensions must be >= 1");
    }
    const long long d0 = input_dim;
    const long long d1 = output_dim;
    const long long l = hidden_layers;
    const long long m = width;
    long long count = (d0 + 1) * m + (l - 1) * (m + 1) * m + (m + 1) * d1;
    if (with_batch_norm) count += 2 * (d0 + l * m + d1);
    return count;
}

template <typename Real>
NetworkParams<Real> xavier_init(RngStream& rng, int input_dim, int output_dim,
                                int hidden_layers, int width, Activation activation) {
    if (input_dim < 1 || output_dim < 1 || hidden_layers < 1 || width < 1) {
        throw std::invalid_argument("xavier_init: dimensions must be >= 1");
    }
    NetworkParams<Real> p;
    p.input_dim = input_dim;
    p.output_dim = output_dim;
    p.hidden_layers = hidden_layers;
    p.width = width;
    p.activation = activation;
    p.input_bn = BatchNormParams<Real>::identity(input_dim);
    int fan_in = input_dim;
    for (int k = 0; k <= hidden_layers; ++k) {
        const int fan_out = k == hidden_layers ? output_dim : width;
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        LayerParams<Real> layer;
        layer.weight.resize(fan_out, fan_in);
        for (Eigen::Index r = 0; r < fan_out; ++r) {
            for (Eigen::Index c = 0; c < fan_in; ++c) {
                layer.weight(r, c) = static_cast<Real>(rng.uniform(-limit, limit));
            }
        }
        layer.bias = Vector<Real>::Zero(fan_out);
        layer.bn = BatchNormParams<Real>::identity(fan_out);
        p.layers.push_back(std::move(layer));
        fan_in = fan_out;
    }
    return p;
}

template <typename Real>
ForwardPass<Real> forward(const NetworkParams<Real>& params,
                          const std::type_identity_t<Matrix<Real>>& inputs,
                          Mode mode, const BatchNormConfig& bn) {
    ForwardPass<Real> pass;
    pass.outputs = run(params, inputs, mode, bn, &pass);
    return pass;
}

template <typename Real>
Matrix<Real> infer(const NetworkParams<Real>& params,
                   const std::type_identity_t<Matrix<Real>>& inputs,
                   const BatchNormConfig& bn) {
    return run<Real>(params, inputs, Mode::inference, bn, nullptr);
}

template <typename Real>
void commit_running_stats(NetworkParams<Real>& params, const ForwardPass<Real>& pass,
                          const BatchNormConfig& bn) {
    if (pass.mode != Mode::training) return;
    if (pass.layers.size() != params.layers.size()) {
        throw std::invalid_argument("commit_running_stats: pass does not match params");
    }
    const auto m = static_cast<Real>(bn.momentum);
    auto fold = [m](BatchNormParams<Real>& p, const BatchNormCache<Real>& c) {
        p.running_mean = m * p.running_mean + (Real(1) - m) * c.batch_mean.transpose();
        p.running_var = m * p.running_var + (Real(1) - m) * c.batch_var.transpose();
    };
    fold(params.input_bn, pass.input_bn);
    for (std::size_t k = 0; k < params.layers.size(); ++k) {
        fold(params.layers[k].bn, pass.layers[k].bn);
    }
}

template <typename Real>
NetworkParams<Real> backward(const NetworkParams<Real>& params, const ForwardPass<Real>& pass,
                             const std::type_identity_t<Matrix<Real>>& output_sensitivity) {
    if (pass.layers.size() != params.layers.size() || pass.outputs.rows() == 0) {
        throw std::invalid_argument("backward: cache does not match params");
    }
    if (output_sensitivity.rows() != pass.outputs.rows() ||
        output_sensitivity.cols() != params.output_dim) {
        throw std::invalid_argument("backward: sensitivity shape mismatch");
    }
    NetworkParams<Real> grad = params.zeros_like();
    Matrix<Real> upstream = output_sensitivity;
    for (std::size_t k = params.layers.size(); k-- > 0;) {
        const LayerParams<Real>& layer = params.layers[k];
        const LayerCache<Real>& cache = pass.layers[k];
        if (cache.input.cols() != layer.weight.cols()) {
            throw std::invalid_argument("backward: cache does not match params");
        }
        if (k + 1 != params.layers.size()) {
            upstream = activation_backward(params.activation, cache.pre_activation, upstream);
        }
        const Matrix<Real> dz =
            batch_norm_backward(layer.bn, cache.bn, pass.mode, upstream, grad.layers[k].bn);
        grad.layers[k].weight = dz.transpose() * cache.input;
        grad.layers[k].bias = dz.colwise().sum().transpose();
        upstream = dz * layer.weight;
    }
    batch_norm_backward(params.input_bn, pass.input_bn, pass.mode, upstream, grad.input_bn);
    return grad;
}

namespace {

template <typename Real>
nlohmann::json vector_json(const Vector<Real>& v) {
    std::vector<double> out(v.data(), v.data() + v.size());
    return out;
}

template <typename Real>
Vector<Real> vector_from(const nlohmann::json& j) {
    const auto values = j.get<std::vector<double>>();
    Vector<Real> v(static_cast<Eigen::Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) v(i) = static_cast<Real>(values[i]);
    return v;
}

template <typename Real>
nlohmann::json bn_json(const BatchNormParams<Real>& bn) {
    return {{"scale", vector_json(bn.scale)},
            {"shift", vector_json(bn.shift)},
            {"running_mean", vector_json(bn.running_mean)},
            {"running_var", vector_json(bn.running_var)}};
}

template <typename Real>
BatchNormParams<Real> bn_from(const nlohmann::json& j) {
    return {vector_from<Real>(j.at("scale")), vector_from<Real>(j.at("shift")),
            vector_from<Real>(j.at("running_mean")), vector_from<Real>(j.at("running_var"))};
}

}  // namespace

template <typename Real>
std::string checkpoint_to_json(const NetworkParams<Real>& params) {
    nlohmann::json j;
    j["format"] = "ppde-network";
    j["version"] = kCheckpointVersion;
    j["input_dim"] = params.input_dim;
    j["output_dim"] = params.output_dim;
    j["hidden_layers"] = params.hidden_layers;
    j["width"] = params.width;
    j["activation"] = to_string(params.activation);
    j["input_bn"] = bn_json(params.input_bn);
    auto& layers = j["layers"] = nlohmann::json::array();
    for (const auto& layer : params.layers) {
        std::vector<double> weight(layer.weight.data(), layer.weight.data() + layer.weight.size());
        layers.push_back({{"rows", layer.weight.rows()},
                          {"cols", layer.weight.cols()},
                          {"weight", weight},
                          {"bias", vector_json(layer.bias)},
                          {"bn", bn_json(layer.bn)}});
    }
    return j.dump();
}

template <typename Real>
NetworkParams<Real> checkpoint_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    if (j.value("format", "") != "ppde-network") {
        throw std::invalid_argument("checkpoint: not a ppde-network document");
    }
    if (j.at("version").get<int>() != kCheckpointVersion) {
        throw std::invalid_argument("checkpoint: unsupported version");
    }
    NetworkParams<Real> p;
    p.input_dim = j.at("input_dim").get<int>();
    p.output_dim = j.at("output_dim").get<int>();
    p.hidden_layers = j.at("hidden_layers").get<int>();
    p.width = j.at("width").get<int>();
    p.activation = parse_activation(j.at("activation").get<std::string>());
    p.input_bn = bn_from<Real>(j.at("input_bn"));
    for (const auto& lj : j.at("layers")) {
        LayerParams<Real> layer;
        const auto rows = lj.at("rows").get<Eigen::Index>();
        const auto cols = lj.at("cols").get<Eigen::Index>();
        const auto weight = lj.at("weight").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(weight.size()) != rows * cols) {
            throw std::invalid_argument("checkpoint: weight size mismatch");
        }
        layer.weight.resize(rows, cols);
        for (Eigen::Index i = 0; i < rows * cols; ++i) {
            layer.weight.data()[i] = static_cast<Real>(weight[static_cast<std::size_t>(i)]);
        }
        layer.bias = vector_from<Real>(lj.at("bias"));
        layer.bn = bn_from<Real>(lj.at("bn"));
        p.layers.push_back(std::move(layer));
    }
    check_shapes(p);
    return p;
}

template <typename Real>
void save_checkpoint(const NetworkParams<Real>& params, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    out << checkpoint_to_json(params) << '\n';
}

template <typename Real>
NetworkParams<Real> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return checkpoint_from_json<Real>(buffer.str());
}

#define PPDE_INSTANTIATE_NETWORK(Real)                                                        \
    template struct BatchNormParams<Real>;                                                   \
    template struct NetworkParams<Real>;                                                     \
    template NetworkParams<Real> xavier_init(RngStream&, int, int, int, int, Activation);    \
    template ForwardPass<Real> forward(const NetworkParams<Real>&, const Matrix<Real>&, Mode, \
                                       const BatchNormConfig&);                              \
    template Matrix<Real> infer(const NetworkParams<Real>&, const Matrix<Real>&,             \
                                const BatchNormConfig&);                                     \
    template void commit_running_stats(NetworkParams<Real>&, const ForwardPass<Real>&,       \
                                       const BatchNormConfig&);                              \
    template NetworkParams<Real> backward(const NetworkParams<Real>&,                        \
                                          const ForwardPass<Real>&, const Matrix<Real>&);    \
    template std::string checkpoint_to_json(const NetworkParams<Real>&);                     \
    template NetworkParams<Real> checkpoint_from_json<Real>(const std::string&);             \
    template void save_checkpoint(const NetworkParams<Real>&, const std::filesystem::path&); \
    template NetworkParams<Real> load_checkpoint<Real>(const std::filesystem::path&);

PPDE_INSTANTIATE_NETWORK(float)
PPDE_INSTANTIATE_NETWORK(double)

}  // namespace ppde
