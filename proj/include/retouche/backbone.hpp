#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <string>
#include <vector>

#include "retouche/autodiff.hpp"
#include "retouche/data.hpp"
#include "retouche/mat.hpp"

// Frozen in-context predictors. A backbone maps (context features, context
// labels, query features) to query predictions using only tape ops, so
// gradients reach whatever produced the features. Backbone weights are placed
// on the tape as frozen leaves.
//
// Classification predictions are q×k probability rows; regression q×1 values.
namespace retouche {

struct Targets {
    TaskKind task = TaskKind::regression;
    std::size_t n_classes = 0;
    std::vector<double> values;  // class indices or real targets

    std::size_t size() const noexcept { return values.size(); }
    bool classification() const noexcept { return task != TaskKind::regression; }
    Targets subset(std::span<const std::size_t> rows) const;
};

Targets targets_of(const Dataset& ds);
Mat one_hot(const Targets& t);

// Floor applied to class probabilities before any log.
inline constexpr double probability_floor = 1e-9;

class Backbone {
public:
    virtual ~Backbone() = default;

    virtual ad::NodeRef predict(ad::Tape& tape, ad::NodeRef context_x, const Targets& context_y,
                                ad::NodeRef query_x) const = 0;
    virtual std::string describe() const = 0;
    // Frozen weights, for frozenness checks.
    virtual std::vector<Mat> parameters() const = 0;

    // Value-level prediction on a private tape.
    Mat predict(const Mat& context_x, const Targets& context_y, const Mat& query_x) const;
};

// Nadaraya–Watson smoother with a Gaussian kernel.
class KernelBackbone final : public Backbone {
public:
    explicit KernelBackbone(double bandwidth, double ridge = 0.0);

    // Median pairwise distance over (at most `max_rows` leading) rows; 1 when degenerate.
    static double median_bandwidth(const Mat& x, std::size_t max_rows = 1000);

    double bandwidth() const noexcept { return bandwidth_; }
    double ridge() const noexcept { return ridge_; }

    ad::NodeRef predict(ad::Tape& tape, ad::NodeRef context_x, const Targets& context_y,
                        ad::NodeRef query_x) const override;
    std::string describe() const override;
    std::vector<Mat> parameters() const override { return {}; }
    using Backbone::predict;

private:
    double bandwidth_;
    double ridge_;
};

struct ToyIclConfig {
    std::size_t width = 32;
    std::size_t n_layers = 2;
    std::size_t n_heads = 2;
    std::size_t max_features = 512;
    std::size_t max_classes = 10;
    std::uint64_t seed = 0;
};

// Small attention-based in-context predictor with seeded frozen weights.
//
// Rows are embedded into a feature subspace (first width/2 channels); context
// rows additionally carry a label embedding in the label subspace. Each layer
// runs distance-based attention from every row to the context rows only, so a
// query's prediction never depends on other queries. One head moves feature
// content, the remaining heads move label content into the queries; a small
// frozen feed-forward block follows. The readout decodes the query's label
// subspace (softmax over classes, or a de-standardized value).
class ToyIclBackbone final : public Backbone {
public:
    explicit ToyIclBackbone(const ToyIclConfig& config = {});

    const ToyIclConfig& config() const noexcept { return config_; }

    ad::NodeRef predict(ad::Tape& tape, ad::NodeRef context_x, const Targets& context_y,
                        ad::NodeRef query_x) const override;
    std::string describe() const override;
    std::vector<Mat> parameters() const override;
    using Backbone::predict;

private:
    struct Layer {
        std::vector<Mat> attn;  // per head, w×dh score projection (feature rows only)
        Mat ff_in, ff_bias, ff_out;
    };

    ToyIclConfig config_;
    Mat feature_embed_;     // max_features×w
    Mat class_embed_;       // max_classes×w, orthonormal rows in the label subspace
    Mat value_embed_;       // 1×w, unit vector in the label subspace
    std::vector<Layer> layers_;
};

enum class BackboneKind { kernel, toy_icl };

struct BackboneSpec {
    BackboneKind kind = BackboneKind::kernel;
    std::optional<double> bandwidth;  // kernel; median heuristic when unset
    double ridge = 0.0;
    ToyIclConfig toy;
};

std::string_view backbone_name(BackboneKind k) noexcept;
BackboneKind parse_backbone(std::string_view text);

// Instantiates a backbone for one fit; the kernel bandwidth default is
// computed from the preprocessed training features.
std::unique_ptr<Backbone> make_backbone(const BackboneSpec& spec, const Mat& train_features);

// Distance-based attention scores: -||a_i - b_j||^2, built from tape ops.
ad::NodeRef neg_sq_dist(ad::Tape& tape, ad::NodeRef a, ad::NodeRef b);

}  // namespace retouche
