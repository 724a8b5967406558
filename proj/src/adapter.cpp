#include "retouche/adapter.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "retouche/error.hpp"
#include "retouche/kernels.hpp"
#include "retouche/rng.hpp"

namespace retouche {

namespace {

Mat gaussian(std::size_t rows, std::size_t cols, double sd, Rng& rng) {
    std::normal_distribution<double> normal(0.0, sd);
    Mat m(rows, cols);
    for (double& x : m.values()) x = normal(rng);
    return m;
}

// Xavier-normal uses fan_in + fan_out of the logical map; small-normal a fixed sd.
Mat init_weight(std::size_t rows, std::size_t cols, std::size_t fan_in, std::size_t fan_out, InitScheme scheme,
                Rng& rng) {
    const double sd = scheme == InitScheme::xavier_normal
                          ? std::sqrt(2.0 / static_cast<double>(fan_in + fan_out))
                          : small_normal_sd;
    return gaussian(rows, cols, sd, rng);
}

BatchNormState fresh_bn(std::size_t d) { return BatchNormState{Mat(1, d, 1.0), Mat(1, d, 0.0), Mat(1, d, 0.0), Mat(1, d, 1.0)}; }

ad::NodeRef activate(ad::Tape& t, ad::NodeRef x, Activation a) {
    switch (a) {
        case Activation::none: return x;
        case Activation::relu: return ad::relu(t, x);
        case Activation::gelu: return ad::gelu(t, x);
    }
    return x;
}

ad::NodeRef batchnorm(ad::Tape& t, BoundAdapter& bound, const BatchNormState& state, const BoundAdapter::Layer& nodes,
                      ad::NodeRef x, Mode mode) {
    if (mode == Mode::train) {
        ad::NodeRef y = ad::batchnorm_train(t, x, nodes.gamma, nodes.beta);
        bound.bn_nodes.push_back(y);
        return y;
    }
    return ad::batchnorm_eval(t, x, nodes.gamma, nodes.beta, state.running_mean, state.running_var);
}

// ---- plain arithmetic for the residual route ----

Mat plain_gemm_t(const Mat& x, const Mat& w) {  // x * w^T
    return kernels::reference::gemm(x, w, kernels::Trans::no, kernels::Trans::yes);
}

Mat plain_gemm(const Mat& x, const Mat& w) { return kernels::reference::gemm(x, w); }

void plain_add_row(Mat& x, const Mat& row) {
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) x(r, c) += row[c];
}

Mat plain_act(Mat x, Activation a) {
    for (double& v : x.values()) {
        if (a == Activation::relu) v = v > 0.0 ? v : 0.0;
        else if (a == Activation::gelu) {
            const double u = std::sqrt(2.0 / 3.14159265358979323846) * (v + ad::gelu_coeff * v * v * v);
            v = 0.5 * v * (1.0 + std::tanh(u));
        }
    }
    return x;
}

Mat plain_bn(const Mat& x, const BatchNormState& s, Mode mode) {
    Mat mean = s.running_mean, var = s.running_var;
    if (mode == Mode::train) {
        const double n = static_cast<double>(x.rows());
        for (std::size_t c = 0; c < x.cols(); ++c) {
            double m = 0.0, v = 0.0;
            for (std::size_t r = 0; r < x.rows(); ++r) m += x(r, c);
            m /= n;
            for (std::size_t r = 0; r < x.rows(); ++r) v += (x(r, c) - m) * (x(r, c) - m);
            mean[c] = m;
            var[c] = v / n;
        }
    }
    Mat y(x.rows(), x.cols());
    for (std::size_t c = 0; c < x.cols(); ++c) {
        const double inv = 1.0 / std::sqrt(var[c] + ad::batchnorm_eps);
        for (std::size_t r = 0; r < x.rows(); ++r) y(r, c) = s.gamma[c] * ((x(r, c) - mean[c]) * inv) + s.beta[c];
    }
    return y;
}

void check_input(const AdapterParams& p, std::size_t cols) {
    if (cols != p.input_dim)
        throw ShapeError("adapter: input has " + std::to_string(cols) + " columns, adapter expects " +
                         std::to_string(p.input_dim));
}

}  // namespace

std::string_view block_name(BlockType b) noexcept { return b == BlockType::cross ? "cross" : "mlp"; }
std::string_view alpha_shape_name(AlphaShape a) noexcept { return a == AlphaShape::per_channel ? "per-channel" : "global"; }
std::string_view init_name(InitScheme s) noexcept { return s == InitScheme::xavier_normal ? "xavier-normal" : "small-normal"; }
std::string_view activation_name(Activation a) noexcept {
    return a == Activation::none ? "none" : a == Activation::relu ? "relu" : "gelu";
}
std::string_view projection_name(ProjectionMode m) noexcept {
    return m == ProjectionMode::trainable ? "trainable" : "truncated-svd";
}

BlockType parse_block(std::string_view t) {
    if (t == "cross") return BlockType::cross;
    if (t == "mlp") return BlockType::mlp;
    throw ConfigError("unknown block_type '" + std::string(t) + "'");
}
AlphaShape parse_alpha_shape(std::string_view t) {
    if (t == "per-channel") return AlphaShape::per_channel;
    if (t == "global") return AlphaShape::global;
    throw ConfigError("unknown alpha_shape '" + std::string(t) + "'");
}
InitScheme parse_init(std::string_view t) {
    if (t == "xavier-normal") return InitScheme::xavier_normal;
    if (t == "small-normal") return InitScheme::small_normal;
    throw ConfigError("unknown weight_init '" + std::string(t) + "'");
}
Activation parse_activation(std::string_view t) {
    if (t == "none" || t == "None") return Activation::none;
    if (t == "relu" || t == "ReLU") return Activation::relu;
    if (t == "gelu") return Activation::gelu;
    throw ConfigError("unknown activation '" + std::string(t) + "'");
}
ProjectionMode parse_projection(std::string_view t) {
    if (t == "trainable") return ProjectionMode::trainable;
    if (t == "truncated-svd") return ProjectionMode::truncated_svd;
    throw ConfigError("unknown projection mode '" + std::string(t) + "'");
}

void AdapterConfig::validate() const {
    if (num_layers < 1) throw ConfigError("num_layers must be >= 1");
    if (low_rank_ratio && !(*low_rank_ratio > 0.0 && *low_rank_ratio <= 1.0))
        throw ConfigError("low_rank_ratio must lie in (0, 1]");
    if (mlp_ratio && !(*mlp_ratio > 0.0)) throw ConfigError("mlp_ratio must be positive");
    if (hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
    if (h_min < 1) throw ConfigError("h_min must be >= 1");
    if (!std::isfinite(alpha_init)) throw ConfigError("alpha_init must be finite");
    if (d_cap < 1) throw ConfigError("d_cap must be >= 1");
}

std::size_t hidden_width(const AdapterConfig& c, std::size_t d) {
    if (c.block == BlockType::cross) {
        if (!c.low_rank_ratio) return d;
        const auto h = static_cast<std::size_t>(std::floor(*c.low_rank_ratio * static_cast<double>(d)));
        return std::clamp<std::size_t>(h, 1, d);
    }
    if (c.mlp_ratio)
        return std::max(c.h_min, static_cast<std::size_t>(std::floor(*c.mlp_ratio * static_cast<double>(d))));
    return c.hidden_dim;
}

LayerWeightCount layer_weight_count(const AdapterParams& p, std::size_t l) {
    LayerWeightCount n;
    if (p.config.block == BlockType::cross) {
        const CrossLayer& layer = p.cross.at(l);
        n.matrix = layer.low_rank() ? layer.u.size() + layer.v.size() : layer.weight.size();
        n.bias = layer.bias.size();
        if (layer.bn) n.batchnorm = layer.bn->gamma.size() + layer.bn->beta.size();
    } else {
        const MlpLayer& layer = p.mlp.at(l);
        n.matrix = layer.w1.size() + layer.w2.size();
        n.bias = layer.b1.size() + layer.b2.size();
        if (layer.bn) n.batchnorm = layer.bn->gamma.size() + layer.bn->beta.size();
    }
    return n;
}

std::size_t trainable_count(const AdapterParams& p) {
    std::size_t n = 0;
    for_each_param(p, [&](const Mat& m, ParamGroup, ParamPart, const std::string&) { n += m.size(); });
    return n;
}

Mat orthogonal_matrix(std::size_t d, std::size_t k, std::uint64_t seed) {
    if (k > d) throw ConfigError("orthogonal_matrix: k > d");
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd g(d, k);
    for (Eigen::Index c = 0; c < g.cols(); ++c)
        for (Eigen::Index r = 0; r < g.rows(); ++r) g(r, c) = normal(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(k));
    const Eigen::MatrixXd& r = qr.matrixQR();
    Mat out(d, k);
    for (std::size_t c = 0; c < k; ++c) {
        const double sign = r(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c)) < 0.0 ? -1.0 : 1.0;
        for (std::size_t i = 0; i < d; ++i) out(i, c) = sign * q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
    }
    return out;
}

namespace {

Mat truncated_svd_basis(const Mat& x, std::size_t k) {
    Eigen::MatrixXd m(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = x(r, c);
    Eigen::BDCSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullV);
    const Eigen::MatrixXd& v = svd.matrixV();
    Mat out(x.cols(), k);
    for (std::size_t c = 0; c < k; ++c)
        for (std::size_t i = 0; i < x.cols(); ++i) out(i, c) = v(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
    return out;
}

}  // namespace

AdapterParams init_adapter(std::size_t d, const AdapterConfig& config, std::uint64_t seed, const Mat* svd_source) {
    if (d < 1) throw ConfigError("init_adapter: d must be >= 1");
    config.validate();

    AdapterParams p;
    p.config = config;
    p.input_dim = d;
    p.init_seed = seed;
    p.alpha = Mat(1, config.alpha_shape == AlphaShape::per_channel ? d : 1, config.alpha_init);

    Rng rng(mix_seed(seed, {0xADA9ULL}));
    const std::size_t h = hidden_width(config, d);
    for (std::size_t l = 0; l < config.num_layers; ++l) {
        if (config.block == BlockType::cross) {
            CrossLayer layer;
            if (config.low_rank_ratio) {
                layer.u = init_weight(d, h, d, h, config.weight_init, rng);
                layer.v = init_weight(d, h, h, d, config.weight_init, rng);
            } else {
                layer.weight = init_weight(d, d, d, d, config.weight_init, rng);
            }
            layer.bias = Mat(1, d);
            if (config.use_batch_norm) layer.bn = fresh_bn(d);
            p.cross.push_back(std::move(layer));
        } else {
            MlpLayer layer;
            layer.w1 = init_weight(h, d, d, h, config.weight_init, rng);
            layer.b1 = Mat(1, h);
            layer.w2 = init_weight(d, h, h, d, config.weight_init, rng);
            layer.b2 = Mat(1, d);
            if (config.use_batch_norm) layer.bn = fresh_bn(d);
            p.mlp.push_back(std::move(layer));
        }
    }

    p.projection.d_cap = config.d_cap;
    p.projection.mode = config.projection_mode;
    p.projection.enabled = d > config.d_cap;
    if (p.projection.enabled) {
        if (config.projection_mode == ProjectionMode::trainable) {
            p.projection.matrix = orthogonal_matrix(d, config.d_cap, mix_seed(seed, {0x0A7ULL}));
        } else {
            if (!svd_source || svd_source->cols() != d)
                throw ConfigError("truncated-svd projection needs the preprocessed training features");
            p.projection.matrix = truncated_svd_basis(*svd_source, config.d_cap);
        }
    }
    return p;
}

BoundAdapter bind(ad::Tape& t, const AdapterParams& p, const TrainableMask& mask) {
    BoundAdapter b;
    b.params = &p;
    auto leaf = [&](const Mat& m, ParamPart part) {
        ad::NodeRef n = t.leaf(m, mask.allows(part));
        b.leaves.push_back(n);
        return n;
    };
    b.alpha = leaf(p.alpha, ParamPart::gate);
    auto bind_bn = [&](const std::optional<BatchNormState>& bn, BoundAdapter::Layer& nodes) {
        if (!bn) return;
        nodes.gamma = leaf(bn->gamma, ParamPart::block);
        nodes.beta = leaf(bn->beta, ParamPart::block);
    };
    for (const CrossLayer& layer : p.cross) {
        BoundAdapter::Layer nodes;
        if (layer.low_rank()) {
            nodes.u = leaf(layer.u, ParamPart::block);
            nodes.v = leaf(layer.v, ParamPart::block);
        } else {
            nodes.weight = leaf(layer.weight, ParamPart::block);
        }
        nodes.bias = leaf(layer.bias, ParamPart::block);
        bind_bn(layer.bn, nodes);
        b.layers.push_back(nodes);
    }
    for (const MlpLayer& layer : p.mlp) {
        BoundAdapter::Layer nodes;
        nodes.w1 = leaf(layer.w1, ParamPart::block);
        nodes.b1 = leaf(layer.b1, ParamPart::block);
        nodes.w2 = leaf(layer.w2, ParamPart::block);
        nodes.b2 = leaf(layer.b2, ParamPart::block);
        bind_bn(layer.bn, nodes);
        b.layers.push_back(nodes);
    }
    if (p.projection.enabled) {
        if (p.projection.mode == ProjectionMode::trainable) b.projection = leaf(p.projection.matrix, ParamPart::projection);
        else b.projection = t.constant(p.projection.matrix);
    }
    return b;
}

ad::NodeRef delta_forward(ad::Tape& t, BoundAdapter& b, ad::NodeRef x0, Mode mode) {
    const AdapterParams& p = *b.params;
    check_input(p, x0.cols);
    b.bn_nodes.clear();
    ad::NodeRef x = x0;
    for (std::size_t l = 0; l < b.layers.size(); ++l) {
        const BoundAdapter::Layer& nodes = b.layers[l];
        const std::optional<BatchNormState>* bn = nullptr;
        if (p.config.block == BlockType::cross) {
            const CrossLayer& layer = p.cross[l];
            ad::NodeRef lin = layer.low_rank()
                                  ? ad::matmul(t, activate(t, ad::matmul(t, x, nodes.u), p.config.activation),
                                               ad::transpose(t, nodes.v))
                                  : ad::matmul(t, x, ad::transpose(t, nodes.weight));
            ad::NodeRef inc = ad::hadamard(t, x0, ad::broadcast_row_add(t, lin, nodes.bias));
            x = ad::add(t, x, inc);
            bn = &layer.bn;
        } else {
            const MlpLayer& layer = p.mlp[l];
            ad::NodeRef hid = activate(t, ad::broadcast_row_add(t, ad::matmul(t, x, ad::transpose(t, nodes.w1)), nodes.b1),
                                       p.config.mlp_activation);
            ad::NodeRef inc = ad::broadcast_row_add(t, ad::matmul(t, hid, ad::transpose(t, nodes.w2)), nodes.b2);
            x = ad::add(t, x, inc);
            bn = &layer.bn;
        }
        if (*bn) x = batchnorm(t, b, **bn, nodes, x, mode);
    }
    return x;
}

ad::NodeRef adapter_forward(ad::Tape& t, BoundAdapter& b, ad::NodeRef x, Mode mode) {
    ad::NodeRef delta = delta_forward(t, b, x, mode);
    ad::NodeRef a = ad::broadcast_rows(t, b.alpha, x.rows, x.cols);
    ad::NodeRef keep = ad::sub(t, t.constant(Mat(x.rows, x.cols, 1.0)), a);
    return ad::add(t, ad::hadamard(t, keep, x), ad::hadamard(t, a, delta));
}

ad::NodeRef project(ad::Tape& t, const BoundAdapter& b, ad::NodeRef z) {
    if (!b.projection) return z;
    return ad::matmul(t, z, *b.projection);
}

void update_running_stats(AdapterParams& p, const ad::Tape& t, const BoundAdapter& b) {
    std::size_t k = 0;
    auto update = [&](std::optional<BatchNormState>& bn) {
        if (!bn) return;
        if (k >= b.bn_nodes.size()) throw Error("update_running_stats: no train-mode forward recorded");
        const ad::NodeRef node = b.bn_nodes[k++];
        const Mat& mean = t.batch_stat(node, 0);
        const Mat& var = t.batch_stat(node, 1);
        const double n = static_cast<double>(node.rows);
        const double unbias = n > 1.0 ? n / (n - 1.0) : 1.0;
        const double m = ad::batchnorm_momentum;
        for (std::size_t c = 0; c < mean.size(); ++c) {
            bn->running_mean[c] = (1.0 - m) * bn->running_mean[c] + m * mean[c];
            bn->running_var[c] = (1.0 - m) * bn->running_var[c] + m * var[c] * unbias;
        }
    };
    for (CrossLayer& layer : p.cross) update(layer.bn);
    for (MlpLayer& layer : p.mlp) update(layer.bn);
}

Mat adapter_forward(const AdapterParams& p, const Mat& x, Mode mode) {
    ad::Tape t;
    BoundAdapter b = bind(t, p, TrainableMask{false, false, false});
    return t.value(adapter_forward(t, b, t.constant(x), mode));
}

Mat cross_delta(const AdapterParams& p, const Mat& x, Mode mode) {
    if (p.config.block != BlockType::cross) throw IncompatibleModelError("cross_delta: adapter has an MLP block");
    ad::Tape t;
    BoundAdapter b = bind(t, p, TrainableMask{false, false, false});
    return t.value(delta_forward(t, b, t.constant(x), mode));
}

Mat mlp_delta(const AdapterParams& p, const Mat& x, Mode mode) {
    if (p.config.block != BlockType::mlp) throw IncompatibleModelError("mlp_delta: adapter has a cross block");
    ad::Tape t;
    BoundAdapter b = bind(t, p, TrainableMask{false, false, false});
    return t.value(delta_forward(t, b, t.constant(x), mode));
}

Mat project(const AdapterParams& p, const Mat& z) {
    if (!p.projection.enabled) return z;
    return kernels::gemm(z, p.projection.matrix);
}

Mat residual_form(const AdapterParams& p, const Mat& x0, Mode mode) {
    check_input(p, x0.cols());
    Mat residual(x0.rows(), x0.cols());
    Mat x = x0;
    for (std::size_t l = 0; l < p.num_layers(); ++l) {
        Mat inc;
        const std::optional<BatchNormState>* bn = nullptr;
        if (p.config.block == BlockType::cross) {
            const CrossLayer& layer = p.cross[l];
            Mat lin = layer.low_rank() ? plain_gemm_t(plain_act(plain_gemm(x, layer.u), p.config.activation), layer.v)
                                       : plain_gemm_t(x, layer.weight);
            plain_add_row(lin, layer.bias);
            inc = Mat(x0.rows(), x0.cols());
            for (std::size_t i = 0; i < inc.size(); ++i) inc[i] = x0[i] * lin[i];
            bn = &layer.bn;
        } else {
            const MlpLayer& layer = p.mlp[l];
            Mat hid = plain_gemm_t(x, layer.w1);
            plain_add_row(hid, layer.b1);
            inc = plain_gemm_t(plain_act(std::move(hid), p.config.mlp_activation), layer.w2);
            plain_add_row(inc, layer.b2);
            bn = &layer.bn;
        }
        Mat next(x.rows(), x.cols());
        for (std::size_t i = 0; i < next.size(); ++i) next[i] = x[i] + inc[i];
        if (*bn) {
            next = plain_bn(next, **bn, mode);
            for (std::size_t i = 0; i < inc.size(); ++i) inc[i] = next[i] - x[i];
        }
        for (std::size_t i = 0; i < residual.size(); ++i) residual[i] += inc[i];
        x = std::move(next);
    }
    Mat out = x0;
    const bool global = p.alpha.size() == 1;
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += (global ? p.alpha[0] : p.alpha[c]) * residual(r, c);
    return out;
}

}  // namespace retouche
