#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "retouche/autodiff.hpp"
#include "retouche/mat.hpp"

// Gated, dimension-preserving input adapter
//
//     g(x) = (1 - alpha) * x + alpha * delta(x)
//
// with delta either a cross block (explicit multiplicative interactions
// anchored on the input) or a residual bottleneck MLP. alpha = 0 reproduces
// the input exactly. An optional cap projection sits *after* the adapter and
// maps d > d_cap features down to d_cap for the backbone.
namespace retouche {

enum class BlockType { cross, mlp };
enum class AlphaShape { per_channel, global };
enum class InitScheme { xavier_normal, small_normal };
enum class Activation { none, relu, gelu };
enum class ProjectionMode { trainable, truncated_svd };
enum class Mode { train, eval };

std::string_view block_name(BlockType b) noexcept;
std::string_view alpha_shape_name(AlphaShape a) noexcept;
std::string_view init_name(InitScheme s) noexcept;
std::string_view activation_name(Activation a) noexcept;
std::string_view projection_name(ProjectionMode m) noexcept;
BlockType parse_block(std::string_view text);
AlphaShape parse_alpha_shape(std::string_view text);
InitScheme parse_init(std::string_view text);
Activation parse_activation(std::string_view text);
ProjectionMode parse_projection(std::string_view text);

inline constexpr double small_normal_sd = 0.01;

struct AdapterConfig {
    BlockType block = BlockType::cross;
    std::size_t num_layers = 2;
    std::optional<double> low_rank_ratio = 0.25;  // cross only; nullopt = full rank
    std::size_t hidden_dim = 64;                  // mlp width unless mlp_ratio is set
    std::optional<double> mlp_ratio;              // mlp: h = max(h_min, floor(r*d))
    std::size_t h_min = 2;
    bool use_batch_norm = true;
    double alpha_init = 0.02;
    AlphaShape alpha_shape = AlphaShape::per_channel;
    InitScheme weight_init = InitScheme::small_normal;
    Activation activation = Activation::none;      // between low-rank cross factors
    Activation mlp_activation = Activation::relu;  // inside the MLP bottleneck
    std::size_t d_cap = 500;
    ProjectionMode projection_mode = ProjectionMode::trainable;

    void validate() const;
    friend bool operator==(const AdapterConfig&, const AdapterConfig&) = default;
};

struct BatchNormState {
    Mat gamma, beta;                  // trainable, 1×d
    Mat running_mean, running_var;    // buffers, 1×d

    friend bool operator==(const BatchNormState&, const BatchNormState&) = default;
};

// y_row = x_row W^T + b (full), or activation(x_row U) V^T + b (low rank).
struct CrossLayer {
    Mat weight;     // d×d, empty when low rank
    Mat u, v;       // d×h
    Mat bias;       // 1×d
    std::optional<BatchNormState> bn;

    bool low_rank() const noexcept { return weight.empty(); }
    friend bool operator==(const CrossLayer&, const CrossLayer&) = default;
};

// x + activation(x W1^T + b1) W2^T + b2.
struct MlpLayer {
    Mat w1;  // h×d
    Mat b1;  // 1×h
    Mat w2;  // d×h
    Mat b2;  // 1×d
    std::optional<BatchNormState> bn;

    friend bool operator==(const MlpLayer&, const MlpLayer&) = default;
};

struct CapProjection {
    bool enabled = false;
    ProjectionMode mode = ProjectionMode::trainable;
    std::size_t d_cap = 500;
    Mat matrix;  // d×d_cap, orthonormal columns at init

    friend bool operator==(const CapProjection&, const CapProjection&) = default;
};

enum class ParamGroup { matrix, bias, gate };
enum class ParamPart { gate, block, projection };

struct AdapterParams {
    AdapterConfig config;
    std::size_t input_dim = 0;
    std::uint64_t init_seed = 0;
    Mat alpha;  // 1×d (per-channel) or 1×1 (global)
    std::vector<CrossLayer> cross;
    std::vector<MlpLayer> mlp;
    CapProjection projection;

    std::size_t num_layers() const noexcept { return config.block == BlockType::cross ? cross.size() : mlp.size(); }
    std::size_t output_dim() const noexcept { return projection.enabled ? projection.d_cap : input_dim; }
    friend bool operator==(const AdapterParams&, const AdapterParams&) = default;
};

// Cross: h = max(1, floor(r*d)) capped at d. MLP: hidden_dim, or max(h_min, floor(r*d)) with mlp_ratio.
std::size_t hidden_width(const AdapterConfig& config, std::size_t d);

// Visits every trainable tensor in a fixed order: alpha, then per layer
// (matrices, bias, batchnorm gamma/beta), then the projection.
template <class Params, class F>
void for_each_param(Params& p, F&& f) {
    f(p.alpha, ParamGroup::gate, ParamPart::gate, std::string("alpha"));
    auto bn = [&](auto& layer, const std::string& prefix) {
        if (layer.bn) {
            f(layer.bn->gamma, ParamGroup::bias, ParamPart::block, prefix + ".bn_gamma");
            f(layer.bn->beta, ParamGroup::bias, ParamPart::block, prefix + ".bn_beta");
        }
    };
    for (std::size_t l = 0; l < p.cross.size(); ++l) {
        auto& layer = p.cross[l];
        const std::string prefix = "cross" + std::to_string(l);
        if (layer.low_rank()) {
            f(layer.u, ParamGroup::matrix, ParamPart::block, prefix + ".u");
            f(layer.v, ParamGroup::matrix, ParamPart::block, prefix + ".v");
        } else {
            f(layer.weight, ParamGroup::matrix, ParamPart::block, prefix + ".weight");
        }
        f(layer.bias, ParamGroup::bias, ParamPart::block, prefix + ".bias");
        bn(layer, prefix);
    }
    for (std::size_t l = 0; l < p.mlp.size(); ++l) {
        auto& layer = p.mlp[l];
        const std::string prefix = "mlp" + std::to_string(l);
        f(layer.w1, ParamGroup::matrix, ParamPart::block, prefix + ".w1");
        f(layer.b1, ParamGroup::bias, ParamPart::block, prefix + ".b1");
        f(layer.w2, ParamGroup::matrix, ParamPart::block, prefix + ".w2");
        f(layer.b2, ParamGroup::bias, ParamPart::block, prefix + ".b2");
        bn(layer, prefix);
    }
    if (p.projection.enabled && p.projection.mode == ProjectionMode::trainable)
        f(p.projection.matrix, ParamGroup::matrix, ParamPart::projection, std::string("projection"));
}

struct LayerWeightCount {
    std::size_t matrix = 0;
    std::size_t bias = 0;
    std::size_t batchnorm = 0;
};

LayerWeightCount layer_weight_count(const AdapterParams& params, std::size_t layer);
std::size_t trainable_count(const AdapterParams& params);

// `svd_source` (preprocessed training features) is required when the
// projection is enabled in truncated-svd mode.
AdapterParams init_adapter(std::size_t d, const AdapterConfig& config, std::uint64_t seed,
                           const Mat* svd_source = nullptr);

// d×k matrix with orthonormal columns (QR of a Gaussian draw).
Mat orthogonal_matrix(std::size_t d, std::size_t k, std::uint64_t seed);

// ---- tape route ----------------------------------------------------------

struct TrainableMask {
    bool gate = true;
    bool block = true;
    bool projection = true;

    bool allows(ParamPart part) const noexcept {
        return part == ParamPart::gate ? gate : part == ParamPart::block ? block : projection;
    }
};

// Adapter tensors placed on a tape. `leaves` follows for_each_param order.
struct BoundAdapter {
    struct Layer {
        ad::NodeRef weight, u, v, bias;  // cross
        ad::NodeRef w1, b1, w2, b2;      // mlp
        ad::NodeRef gamma, beta;         // batchnorm
    };

    const AdapterParams* params = nullptr;
    ad::NodeRef alpha;
    std::vector<Layer> layers;
    std::optional<ad::NodeRef> projection;
    std::vector<ad::NodeRef> leaves;
    std::vector<ad::NodeRef> bn_nodes;  // batchnorm_train nodes from the last train-mode forward
};

BoundAdapter bind(ad::Tape& tape, const AdapterParams& params, const TrainableMask& mask = {});

ad::NodeRef delta_forward(ad::Tape& tape, BoundAdapter& bound, ad::NodeRef x, Mode mode);
ad::NodeRef adapter_forward(ad::Tape& tape, BoundAdapter& bound, ad::NodeRef x, Mode mode);
// Applies the cap projection when enabled, identity otherwise.
ad::NodeRef project(ad::Tape& tape, const BoundAdapter& bound, ad::NodeRef z);

// Exponential-moving-average update from the batchnorm_train nodes of the
// most recent train-mode forward (momentum 0.1, unbiased batch variance).
void update_running_stats(AdapterParams& params, const ad::Tape& tape, const BoundAdapter& bound);

// ---- value route ---------------------------------------------------------

Mat adapter_forward(const AdapterParams& params, const Mat& x, Mode mode = Mode::eval);
Mat cross_delta(const AdapterParams& params, const Mat& x, Mode mode = Mode::eval);
Mat mlp_delta(const AdapterParams& params, const Mat& x, Mode mode = Mode::eval);
Mat project(const AdapterParams& params, const Mat& z);

// x + alpha * sum_l increment_l, computed with plain matrix arithmetic
// independent of the tape. Increments are x0 * (W x_l + b) (cross) or
// W2 act(W1 x_l + b1) + b2 (mlp); with batchnorm the increment is the
// layer's full step x_{l+1} - x_l.
Mat residual_form(const AdapterParams& params, const Mat& x, Mode mode = Mode::eval);

}  // namespace retouche
