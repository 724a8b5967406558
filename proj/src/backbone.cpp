#include "retouche/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "retouche/adapter.hpp"
#include "retouche/error.hpp"
#include "retouche/kernels.hpp"
#include "retouche/rng.hpp"

namespace retouche {

namespace {

Mat column_of(const std::vector<double>& v) { return Mat(v.size(), 1, v); }

// (p + floor) / (1 + k floor): strictly positive rows that still sum to one.
ad::NodeRef floor_probabilities(ad::Tape& t, ad::NodeRef p) {
    const double k = static_cast<double>(p.cols);
    ad::NodeRef lifted = ad::broadcast_row_add(t, p, t.constant(Mat(1, p.cols, probability_floor)));
    return ad::scale(t, lifted, 1.0 / (1.0 + k * probability_floor));
}

void check_context(ad::NodeRef xc, const Targets& yc, ad::NodeRef xq) {
    if (xc.rows == 0) throw ShapeError("backbone: empty context");
    if (yc.size() != xc.rows)
        throw ShapeError("backbone: " + std::to_string(yc.size()) + " context labels for " + std::to_string(xc.rows) +
                         " context rows");
    if (xc.cols != xq.cols)
        throw ShapeError("backbone: context has " + std::to_string(xc.cols) + " features, queries " +
                         std::to_string(xq.cols));
    if (yc.classification() && yc.n_classes < 2) throw ShapeError("backbone: classification needs >= 2 classes");
}

Mat gaussian(std::size_t rows, std::size_t cols, double sd, Rng& rng) {
    std::normal_distribution<double> normal(0.0, sd);
    Mat m(rows, cols);
    for (double& x : m.values()) x = normal(rng);
    return m;
}

std::string fmt_real(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

Targets Targets::subset(std::span<const std::size_t> rows) const {
    Targets out{task, n_classes, {}};
    out.values.reserve(rows.size());
    for (std::size_t r : rows) out.values.push_back(values.at(r));
    return out;
}

Targets targets_of(const Dataset& ds) { return Targets{ds.task, ds.n_classes(), ds.y}; }

Mat one_hot(const Targets& t) {
    Mat m(t.size(), t.n_classes);
    for (std::size_t r = 0; r < t.size(); ++r) {
        const auto k = static_cast<std::size_t>(t.values[r]);
        if (k >= t.n_classes) throw DataError("label " + std::to_string(k) + " outside the class set");
        m(r, k) = 1.0;
    }
    return m;
}

Mat Backbone::predict(const Mat& context_x, const Targets& context_y, const Mat& query_x) const {
    ad::Tape t;
    return t.value(predict(t, t.constant(context_x), context_y, t.constant(query_x)));
}

ad::NodeRef neg_sq_dist(ad::Tape& t, ad::NodeRef a, ad::NodeRef b) {
    ad::NodeRef ones_d = t.constant(Mat(a.cols, 1, 1.0));
    ad::NodeRef an = ad::matmul(t, ad::square(t, a), ones_d);  // n×1
    ad::NodeRef bn = ad::matmul(t, ad::square(t, b), ones_d);  // m×1
    ad::NodeRef rows = ad::matmul(t, an, t.constant(Mat(1, b.rows, 1.0)));
    ad::NodeRef cols = ad::matmul(t, t.constant(Mat(a.rows, 1, 1.0)), ad::transpose(t, bn));
    ad::NodeRef cross = ad::matmul(t, a, ad::transpose(t, b));
    return ad::sub(t, ad::scale(t, cross, 2.0), ad::add(t, rows, cols));
}

// ---- kernel ----

KernelBackbone::KernelBackbone(double bandwidth, double ridge) : bandwidth_(bandwidth), ridge_(ridge) {
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) throw ConfigError("kernel bandwidth must be positive and finite");
    if (!(ridge >= 0.0)) throw ConfigError("kernel ridge must be >= 0");
}

double KernelBackbone::median_bandwidth(const Mat& x, std::size_t max_rows) {
    const std::size_t n = std::min(x.rows(), max_rows);
    if (n < 2) return 1.0;
    Mat head(n, x.cols(), std::vector<double>(x.data(), x.data() + n * x.cols()));
    const Mat d2 = kernels::pairwise_sq_dist(head, head);
    std::vector<double> dist;
    dist.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) dist.push_back(std::sqrt(d2(i, j)));
    auto mid = dist.begin() + static_cast<std::ptrdiff_t>(dist.size() / 2);
    std::nth_element(dist.begin(), mid, dist.end());
    const double med = *mid;
    return med > 0.0 && std::isfinite(med) ? med : 1.0;
}

ad::NodeRef KernelBackbone::predict(ad::Tape& t, ad::NodeRef xc, const Targets& yc, ad::NodeRef xq) const {
    check_context(xc, yc, xq);
    ad::NodeRef logits = ad::scale(t, neg_sq_dist(t, xq, xc), 1.0 / (2.0 * bandwidth_ * bandwidth_));

    if (yc.classification()) {
        ad::NodeRef w = ad::softmax_rows(t, logits);
        return floor_probabilities(t, ad::matmul(t, w, t.constant(one_hot(yc))));
    }
    ad::NodeRef y = t.constant(column_of(yc.values));
    if (ridge_ == 0.0) return ad::matmul(t, ad::softmax_rows(t, logits), y);

    // Unnormalized weights; 1/(sum w + ridge) via exp(-log(.)).
    ad::NodeRef w = ad::exp(t, logits);
    ad::NodeRef num = ad::matmul(t, w, y);
    ad::NodeRef den = ad::add(t, ad::matmul(t, w, t.constant(Mat(xc.rows, 1, 1.0))), t.constant(Mat(xq.rows, 1, ridge_)));
    return ad::hadamard(t, num, ad::exp(t, ad::scale(t, ad::log(t, den), -1.0)));
}

std::string KernelBackbone::describe() const {
    return "kernel(bandwidth=" + fmt_real(bandwidth_) + ",ridge=" + fmt_real(ridge_) + ")";
}

// ---- toy ICL ----

ToyIclBackbone::ToyIclBackbone(const ToyIclConfig& c) : config_(c) {
    if (c.width < 4 || c.width % 2 != 0) throw ConfigError("toy-icl width must be even and >= 4");
    if (c.n_heads < 2) throw ConfigError("toy-icl needs >= 2 heads (feature + label)");
    if (c.n_layers < 1) throw ConfigError("toy-icl needs >= 1 layer");
    const std::size_t half = c.width / 2;
    if (c.max_classes > half) throw ConfigError("toy-icl max_classes must be <= width/2");

    Rng rng(mix_seed(c.seed, {0x1C1ULL}));
    feature_embed_ = Mat(c.max_features, c.width);
    {
        Mat g = gaussian(c.max_features, half, 0.25, rng);
        for (std::size_t r = 0; r < c.max_features; ++r)
            for (std::size_t k = 0; k < half; ++k) feature_embed_(r, k) = g(r, k);
    }
    const Mat basis = orthogonal_matrix(half, c.max_classes + 1, mix_seed(c.seed, {0x1C2ULL}));
    class_embed_ = Mat(c.max_classes, c.width);
    for (std::size_t k = 0; k < c.max_classes; ++k)
        for (std::size_t i = 0; i < half; ++i) class_embed_(k, half + i) = basis(i, k);
    value_embed_ = Mat(1, c.width);
    for (std::size_t i = 0; i < half; ++i) value_embed_(0, half + i) = basis(i, c.max_classes);

    const std::size_t dh = half;
    for (std::size_t l = 0; l < c.n_layers; ++l) {
        Layer layer;
        for (std::size_t h = 0; h < c.n_heads; ++h) {
            Mat a(c.width, dh);
            Mat g = gaussian(half, dh, 1.0 / std::sqrt(static_cast<double>(half)), rng);
            for (std::size_t r = 0; r < half; ++r)
                for (std::size_t k = 0; k < dh; ++k) a(r, k) = g(r, k);
            layer.attn.push_back(std::move(a));
        }
        layer.ff_in = gaussian(c.width, 2 * c.width, 1.0 / std::sqrt(static_cast<double>(c.width)), rng);
        layer.ff_bias = gaussian(1, 2 * c.width, 0.1, rng);
        layer.ff_out = gaussian(2 * c.width, c.width, 0.02 / std::sqrt(static_cast<double>(2 * c.width)), rng);
        layers_.push_back(std::move(layer));
    }
}

std::vector<Mat> ToyIclBackbone::parameters() const {
    std::vector<Mat> out{feature_embed_, class_embed_, value_embed_};
    for (const Layer& l : layers_) {
        out.insert(out.end(), l.attn.begin(), l.attn.end());
        out.push_back(l.ff_in);
        out.push_back(l.ff_bias);
        out.push_back(l.ff_out);
    }
    return out;
}

std::string ToyIclBackbone::describe() const {
    return "toy-icl(width=" + std::to_string(config_.width) + ",layers=" + std::to_string(config_.n_layers) +
           ",heads=" + std::to_string(config_.n_heads) + ",seed=" + std::to_string(config_.seed) + ")";
}

ad::NodeRef ToyIclBackbone::predict(ad::Tape& t, ad::NodeRef xc, const Targets& yc, ad::NodeRef xq) const {
    check_context(xc, yc, xq);
    const std::size_t d = xc.cols;
    const std::size_t w = config_.width;
    const std::size_t half = w / 2;
    if (d > config_.max_features)
        throw ShapeError("toy-icl: " + std::to_string(d) + " features exceed max_features " +
                         std::to_string(config_.max_features));
    if (yc.classification() && yc.n_classes > config_.max_classes)
        throw ShapeError("toy-icl: " + std::to_string(yc.n_classes) + " classes exceed max_classes " +
                         std::to_string(config_.max_classes));

    Mat embed(d, w);
    std::copy_n(feature_embed_.data(), d * w, embed.data());
    ad::NodeRef e = t.constant(std::move(embed));

    // Context label channels.
    double y_mean = 0.0, y_sd = 1.0;
    Mat label_part(xc.rows, w);
    if (yc.classification()) {
        for (std::size_t r = 0; r < yc.size(); ++r) {
            const auto k = static_cast<std::size_t>(yc.values[r]);
            for (std::size_t i = 0; i < w; ++i) label_part(r, i) = class_embed_(k, i);
        }
    } else {
        for (double v : yc.values) y_mean += v;
        y_mean /= static_cast<double>(yc.size());
        double ss = 0.0;
        for (double v : yc.values) ss += (v - y_mean) * (v - y_mean);
        y_sd = std::sqrt(ss / static_cast<double>(yc.size()));
        if (!(y_sd > 0.0)) y_sd = 1.0;
        for (std::size_t r = 0; r < yc.size(); ++r)
            for (std::size_t i = 0; i < w; ++i) label_part(r, i) = (yc.values[r] - y_mean) / y_sd * value_embed_(0, i);
    }

    ad::NodeRef hc = ad::add(t, ad::matmul(t, xc, e), t.constant(std::move(label_part)));
    ad::NodeRef hq = ad::matmul(t, xq, e);
    const ad::NodeRef zeros_c = t.constant(Mat(xc.rows, half));
    const std::size_t label_heads = config_.n_heads - 1;

    for (const Layer& layer : layers_) {
        ad::NodeRef hc_feat = ad::slice_cols(t, hc, 0, half);
        ad::NodeRef hc_label = ad::slice_cols(t, hc, half, w);
        ad::NodeRef feat_update_c{}, feat_update_q{}, label_update_q{};
        for (std::size_t h = 0; h < config_.n_heads; ++h) {
            ad::NodeRef proj = t.constant(layer.attn[h]);
            ad::NodeRef kc = ad::matmul(t, hc, proj);
            ad::NodeRef qq = ad::matmul(t, hq, proj);
            ad::NodeRef att_q = ad::softmax_rows(t, ad::scale(t, neg_sq_dist(t, qq, kc), 0.5));
            if (h == 0) {
                ad::NodeRef att_c = ad::softmax_rows(t, ad::scale(t, neg_sq_dist(t, kc, kc), 0.5));
                feat_update_c = ad::matmul(t, att_c, hc_feat);
                feat_update_q = ad::matmul(t, att_q, hc_feat);
            } else {
                ad::NodeRef upd = ad::scale(t, ad::matmul(t, att_q, hc_label), 1.0 / static_cast<double>(label_heads));
                label_update_q = h == 1 ? upd : ad::add(t, label_update_q, upd);
            }
        }
        const std::array<ad::NodeRef, 2> upd_c{feat_update_c, zeros_c};
        const std::array<ad::NodeRef, 2> upd_q{feat_update_q, label_update_q};
        hc = ad::add(t, hc, ad::scale(t, ad::concat_cols(t, upd_c), 0.5));
        hq = ad::add(t, hq, ad::concat_cols(t, upd_q));
        // The feed-forward block writes into the feature subspace only.
        auto ff = [&](ad::NodeRef hmat) {
            ad::NodeRef hid = ad::relu(
                t, ad::broadcast_row_add(t, ad::matmul(t, hmat, t.constant(layer.ff_in)), t.constant(layer.ff_bias)));
            ad::NodeRef out = ad::matmul(t, hid, t.constant(layer.ff_out));
            const std::array<ad::NodeRef, 2> parts{ad::slice_cols(t, out, 0, half), t.constant(Mat(hmat.rows, half))};
            return ad::add(t, hmat, ad::concat_cols(t, parts));
        };
        hc = ff(hc);
        hq = ff(hq);
    }

    const double inv_layers = 1.0 / static_cast<double>(layers_.size());
    if (yc.classification()) {
        Mat readout(w, yc.n_classes);
        for (std::size_t k = 0; k < yc.n_classes; ++k)
            for (std::size_t i = 0; i < w; ++i) readout(i, k) = 8.0 * inv_layers * class_embed_(k, i);
        ad::NodeRef p = ad::softmax_rows(t, ad::matmul(t, hq, t.constant(std::move(readout))));
        return floor_probabilities(t, p);
    }
    Mat readout(w, 1);
    for (std::size_t i = 0; i < w; ++i) readout(i, 0) = inv_layers * y_sd * value_embed_(0, i);
    ad::NodeRef out = ad::matmul(t, hq, t.constant(std::move(readout)));
    return ad::broadcast_row_add(t, out, t.constant(Mat(1, 1, y_mean)));
}

std::string_view backbone_name(BackboneKind k) noexcept { return k == BackboneKind::kernel ? "kernel" : "toy-icl"; }

BackboneKind parse_backbone(std::string_view text) {
    if (text == "kernel") return BackboneKind::kernel;
    if (text == "toy-icl") return BackboneKind::toy_icl;
    throw ConfigError("unknown backbone '" + std::string(text) + "' (kernel|toy-icl)");
}

std::unique_ptr<Backbone> make_backbone(const BackboneSpec& spec, const Mat& train_features) {
    if (spec.kind == BackboneKind::kernel)
        return std::make_unique<KernelBackbone>(spec.bandwidth.value_or(KernelBackbone::median_bandwidth(train_features)),
                                                spec.ridge);
    return std::make_unique<ToyIclBackbone>(spec.toy);
}

}  // namespace retouche
