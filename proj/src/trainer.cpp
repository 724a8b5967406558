#include "retouche/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <ostream>

#include "json.hpp"

#include "retouche/error.hpp"
#include "retouche/kernels.hpp"
#include "retouche/metrics.hpp"
#include "retouche/rng.hpp"

namespace retouche {

std::string_view optimizer_name(OptimizerKind k) noexcept { return k == OptimizerKind::adamw ? "adamw" : "muon"; }

std::string_view schedule_name(Schedule s) noexcept {
    switch (s) {
        case Schedule::constant: return "constant";
        case Schedule::cosine: return "cosine";
        case Schedule::coslog4: return "coslog4";
    }
    return "unknown";
}

OptimizerKind parse_optimizer(std::string_view text) {
    if (text == "adamw") return OptimizerKind::adamw;
    if (text == "muon") return OptimizerKind::muon;
    throw ConfigError("unknown optimizer '" + std::string(text) + "' (adamw|muon)");
}

Schedule parse_schedule(std::string_view text) {
    for (Schedule s : {Schedule::constant, Schedule::cosine, Schedule::coslog4})
        if (text == schedule_name(s)) return s;
    throw ConfigError("unknown lr schedule '" + std::string(text) + "' (constant|cosine|coslog4)");
}

void TrainConfig::validate() const {
    auto positive = [](double v, const char* what) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(what) + " must be positive and finite");
    };
    positive(lr, "lr");
    positive(max_grad_norm, "max_grad_norm");
    positive(gate_lr_factor, "gate_lr_factor");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
    if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must be in (0, 1)");
    if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) throw ConfigError("label_smoothing must be in [0, 1)");
    if (epochs == 0) throw ConfigError("epochs must be >= 1");
    if (!(context_fraction > 0.0 && context_fraction < 1.0)) throw ConfigError("context_fraction must be in (0, 1)");
}

// ---- loss ----

namespace {

Mat smoothed_targets(const Targets& t, double s) {
    const std::size_t k = t.n_classes;
    const double off = k > 1 ? s / static_cast<double>(k - 1) : 0.0;
    Mat m(t.size(), k, off);
    for (std::size_t r = 0; r < t.size(); ++r) {
        const auto c = static_cast<std::size_t>(t.values[r]);
        if (c >= k || t.values[r] < 0.0) throw DataError("loss: label " + std::to_string(t.values[r]) + " outside the class set");
        m(r, c) = 1.0 - s;
    }
    return m;
}

}  // namespace

ad::NodeRef loss(ad::Tape& t, ad::NodeRef pred, const Targets& y, double s) {
    if (pred.rows != y.size()) throw ShapeError("loss: " + std::to_string(pred.rows) + " predictions for " +
                                                std::to_string(y.size()) + " targets");
    if (y.size() == 0) throw ShapeError("loss: no rows");
    const double inv_n = 1.0 / static_cast<double>(y.size());
    if (y.classification()) {
        if (pred.cols != y.n_classes) throw ShapeError("loss: prediction width differs from class count");
        ad::NodeRef ce = ad::sum(t, ad::hadamard(t, ad::log(t, pred), t.constant(smoothed_targets(y, s))));
        return ad::scale(t, ce, -inv_n);
    }
    if (pred.cols != 1) throw ShapeError("loss: regression predictions must be a column");
    return ad::mean(t, ad::square(t, ad::sub(t, pred, t.constant(Mat(y.size(), 1, y.values)))));
}

double loss_value(const Mat& p, const Targets& y, double s) {
    ad::Tape t;
    return t.value(loss(t, t.constant(p), y, s))[0];
}

// ---- schedule ----

double schedule_multiplier(Schedule kind, std::size_t epoch, std::size_t total) {
    if (total == 0 || epoch >= total)
        throw ConfigError("schedule: epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(total) + ")");
    const double t = static_cast<double>(epoch) / static_cast<double>(total);
    switch (kind) {
        case Schedule::constant: return 1.0;
        case Schedule::cosine: return 0.5 * (1.0 + std::cos(std::numbers::pi * t));
        case Schedule::coslog4: {
            // Cycles of length 1, 2, 4, 8 (in fifteenths).
            double start = 0.0;
            for (int i = 0; i < 4; ++i) {
                const double len = static_cast<double>(1 << i) / 15.0;
                const double end = static_cast<double>((1 << (i + 1)) - 1) / 15.0;
                if (t < end || i == 3) return 0.5 * (1.0 + std::cos(std::numbers::pi * (t - start) / len));
                start = end;
            }
        }
    }
    return 1.0;
}

// ---- optimizer ----

Mat newton_schulz(const Mat& g, std::size_t steps) {
    const bool tall = g.rows() > g.cols();
    Mat x = tall ? g.transposed() : g;
    double norm = 0.0;
    for (double v : x.values()) norm += v * v;
    norm = std::sqrt(norm) + 1e-7;
    for (double& v : x.values()) v /= norm;
    for (std::size_t s = 0; s < steps; ++s) {
        const Mat a = kernels::gemm(x, x, kernels::Trans::no, kernels::Trans::yes);
        Mat b = kernels::gemm(a, a);
        for (std::size_t i = 0; i < b.size(); ++i) b[i] = ns_b * a[i] + ns_c * b[i];
        const Mat bx = kernels::gemm(b, x);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = ns_a * x[i] + bx[i];
    }
    return tall ? x.transposed() : x;
}

std::vector<ParamSlot> trainable_slots(AdapterParams& params, const TrainableMask& mask) {
    std::vector<ParamSlot> slots;
    for_each_param(params, [&](Mat& m, ParamGroup group, ParamPart part, const std::string& name) {
        if (mask.allows(part)) slots.push_back({&m, group, name});
    });
    return slots;
}

OptimizerState init_optimizer(std::span<const ParamSlot> slots) {
    OptimizerState s;
    for (const ParamSlot& p : slots) {
        s.m.emplace_back(p.value->rows(), p.value->cols());
        s.v.emplace_back(p.value->rows(), p.value->cols());
    }
    return s;
}

double global_norm(std::span<const Mat> grads) {
    double ss = 0.0;
    for (const Mat& g : grads)
        for (double v : g.values()) ss += v * v;
    return std::sqrt(ss);
}

double clip_global_norm(std::span<Mat> grads, double max_norm) {
    const double norm = global_norm(grads);
    if (std::isfinite(norm) && norm > max_norm) {
        const double f = max_norm / norm;
        for (Mat& g : grads)
            for (double& v : g.values()) v *= f;
    }
    return norm;
}

StepReport optimizer_step(OptimizerState& st, std::span<const ParamSlot> slots, std::span<Mat> grads,
                          const TrainConfig& cfg, std::size_t epoch) {
    if (grads.size() != slots.size() || st.m.size() != slots.size())
        throw ShapeError("optimizer_step: " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(slots.size()) + " parameters");
    StepReport report;
    report.grad_norm = clip_global_norm(grads, cfg.max_grad_norm);
    if (!std::isfinite(report.grad_norm)) {
        report.skipped = true;
        return report;
    }
    ++st.step;
    const double lr = cfg.lr * schedule_multiplier(cfg.lr_schedule, epoch, cfg.epochs);
    const double bc1 = 1.0 - std::pow(adam_beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));

    for (std::size_t i = 0; i < slots.size(); ++i) {
        Mat& p = *slots[i].value;
        const Mat& g = grads[i];
        if (!p.same_shape(g)) throw ShapeError("optimizer_step: gradient shape " + g.shape_string() + " for " +
                                               slots[i].name + " " + p.shape_string());
        const ParamGroup group = slots[i].group;
        const double group_lr = group == ParamGroup::gate ? lr * cfg.gate_lr_factor : lr;
        const bool decay = group == ParamGroup::matrix && cfg.weight_decay > 0.0;

        if (cfg.optimizer == OptimizerKind::muon && group == ParamGroup::matrix) {
            Mat& buf = st.m[i];
            Mat update(p.rows(), p.cols());
            for (std::size_t k = 0; k < p.size(); ++k) {
                buf[k] = muon_momentum * buf[k] + g[k];
                update[k] = g[k] + muon_momentum * buf[k];  // Nesterov
            }
            const Mat o = newton_schulz(update);
            const double shape_scale =
                std::sqrt(std::max(1.0, static_cast<double>(p.rows()) / static_cast<double>(p.cols())));
            for (std::size_t k = 0; k < p.size(); ++k) {
                if (decay) p[k] *= 1.0 - group_lr * cfg.weight_decay;
                p[k] -= group_lr * shape_scale * o[k];
            }
            continue;
        }

        Mat& m = st.m[i];
        Mat& v = st.v[i];
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = adam_beta1 * m[k] + (1.0 - adam_beta1) * g[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
            if (decay) p[k] *= 1.0 - group_lr * cfg.weight_decay;
            p[k] -= group_lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + adam_eps);
        }
    }
    return report;
}

bool EarlyStopper::observe(std::size_t epoch, double metric) {
    improved_ = std::isfinite(metric) && (best_epoch_ == 0 || metric < best_);
    if (improved_) {
        best_ = metric;
        best_epoch_ = epoch;
    }
    return best_epoch_ == 0 ? false : epoch - best_epoch_ >= patience_;
}

// ---- fit ----

Mat adapted_predict(const AdapterParams& params, const Backbone& backbone, const Mat& cx, const Targets& cy,
                    const Mat& qx) {
    ad::Tape t;
    BoundAdapter b = bind(t, params, TrainableMask{false, false, false});
    ad::NodeRef zc = project(t, b, adapter_forward(t, b, t.constant(cx), Mode::eval));
    ad::NodeRef zq = project(t, b, adapter_forward(t, b, t.constant(qx), Mode::eval));
    return t.value(backbone.predict(t, zc, cy, zq));
}

namespace {

double alpha_mean_abs(const AdapterParams& p) {
    double s = 0.0;
    for (double a : p.alpha.values()) s += std::abs(a);
    return p.alpha.empty() ? 0.0 : s / static_cast<double>(p.alpha.size());
}

Mat take_rows(const Mat& x, std::span<const std::size_t> rows) {
    Mat out(rows.size(), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(x.data() + rows[i] * x.cols(), x.cols(), out.data() + i * x.cols());
    return out;
}

double validation_metric(const AdapterParams& p, const Backbone& bb, const FitData& data) {
    try {
        return deployment_metric(adapted_predict(p, bb, data.x_train, data.y_train, data.x_val), data.y_val);
    } catch (const NumericalError&) {
        return std::numeric_limits<double>::quiet_NaN();
    }
}

}  // namespace

FitResult fit(const AdapterParams& init, const Backbone& backbone, const FitData& data, const TrainConfig& cfg,
              const TrainableMask& mask) {
    cfg.validate();
    const std::size_t n = data.x_train.rows();
    if (n < 2) throw FitError("fit: need at least 2 training rows, got " + std::to_string(n));
    if (data.y_train.size() != n) throw ShapeError("fit: training labels do not match training rows");
    if (data.x_val.rows() == 0) throw FitError("fit: empty validation split");
    if (data.x_val.cols() != data.x_train.cols() || data.x_train.cols() != init.input_dim)
        throw ShapeError("fit: feature width differs from the adapter's input dimension");

    FitResult result;
    result.best = init;
    result.initial_val_metric = validation_metric(init, backbone, data);

    AdapterParams params = init;
    std::vector<ParamSlot> slots = trainable_slots(params, mask);
    OptimizerState opt = init_optimizer(slots);
    EarlyStopper stopper(cfg.patience);
    Rng rng(mix_seed(cfg.seed, {0xF17ULL}));

    const auto n_context = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(cfg.context_fraction * static_cast<double>(n))), 1, n - 1);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::size_t nonfinite_run = 0;

    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        std::shuffle(order.begin(), order.end(), rng);
        EpochRecord rec;
        rec.epoch = e + 1;
        rec.lr = cfg.lr * schedule_multiplier(cfg.lr_schedule, e, cfg.epochs);

        bool finite = true;
        try {
            ad::Tape t;
            BoundAdapter b = bind(t, params, mask);
            ad::NodeRef z = project(t, b, adapter_forward(t, b, t.constant(take_rows(data.x_train, order)), Mode::train));
            ad::NodeRef zc = ad::slice_rows(t, z, 0, n_context);
            ad::NodeRef zq = ad::slice_rows(t, z, n_context, n);
            const std::span<const std::size_t> ctx(order.data(), n_context);
            const std::span<const std::size_t> qry(order.data() + n_context, n - n_context);
            const Targets yq = data.y_train.subset(qry);
            ad::NodeRef l = loss(t, backbone.predict(t, zc, data.y_train.subset(ctx), zq), yq, cfg.label_smoothing);
            rec.train_loss = t.value(l)[0];

            const ad::Gradients grads = t.backprop(l);
            std::vector<Mat> g;
            std::size_t leaf = 0;
            for_each_param(params, [&](Mat& m, ParamGroup, ParamPart part, const std::string&) {
                const ad::NodeRef node = b.leaves[leaf++];
                if (!mask.allows(part)) return;
                g.push_back(grads.contains(node) ? grads.at(node) : Mat(m.rows(), m.cols()));
            });
            const StepReport step = optimizer_step(opt, slots, g, cfg, e);
            rec.step_skipped = step.skipped;
            if (step.skipped) ++result.skipped_steps;
            update_running_stats(params, t, b);
        } catch (const NumericalError&) {
            finite = false;
            rec.train_loss = std::numeric_limits<double>::quiet_NaN();
        }
        if (finite) {
            rec.val_metric = validation_metric(params, backbone, data);
            finite = std::isfinite(rec.val_metric);
        } else {
            rec.val_metric = std::numeric_limits<double>::quiet_NaN();
        }
        rec.alpha_mean_abs = alpha_mean_abs(params);
        result.trace.push_back(rec);

        nonfinite_run = finite ? 0 : nonfinite_run + 1;
        if (nonfinite_run >= max_nonfinite_epochs) {
            result.failed = true;
            result.failure = "non-finite loss for " + std::to_string(max_nonfinite_epochs) + " consecutive epochs";
            break;
        }
        const bool stop = stopper.observe(rec.epoch, rec.val_metric);
        if (stopper.improved()) result.best = params;
        if (stop) break;
    }
    result.best_epoch = stopper.best_epoch();
    result.best_val_metric = stopper.best_epoch() ? stopper.best_metric() : result.initial_val_metric;
    if (stopper.best_epoch() == 0 && !result.failed) {
        result.failed = true;
        result.failure = "no finite validation metric";
    }
    return result;
}

void write_trace(std::ostream& out, std::span<const EpochRecord> trace) {
    for (const EpochRecord& r : trace) {
        nlohmann::ordered_json j;
        j["epoch"] = r.epoch;
        j["lr"] = r.lr;
        j["train_loss"] = std::isfinite(r.train_loss) ? nlohmann::ordered_json(r.train_loss) : nullptr;
        j["val_metric"] = std::isfinite(r.val_metric) ? nlohmann::ordered_json(r.val_metric) : nullptr;
        j["alpha_mean_abs"] = r.alpha_mean_abs;
        if (r.step_skipped) j["step_skipped"] = true;
        out << j.dump() << '\n';
    }
}

}  // namespace retouche
