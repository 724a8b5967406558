#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "retouche/adapter.hpp"
#include "retouche/autodiff.hpp"
#include "retouche/backbone.hpp"
#include "retouche/mat.hpp"

namespace retouche {

enum class OptimizerKind { adamw, muon };
enum class Schedule { constant, cosine, coslog4 };

std::string_view optimizer_name(OptimizerKind k) noexcept;
std::string_view schedule_name(Schedule s) noexcept;
OptimizerKind parse_optimizer(std::string_view text);
Schedule parse_schedule(std::string_view text);

inline constexpr double adam_beta1 = 0.9;
inline constexpr double adam_eps = 1e-8;
inline constexpr double muon_momentum = 0.95;
inline constexpr std::size_t newton_schulz_steps = 5;
inline constexpr double ns_a = 3.4445, ns_b = -4.7750, ns_c = 2.0315;

struct TrainConfig {
    OptimizerKind optimizer = OptimizerKind::adamw;
    double lr = 5e-3;
    double weight_decay = 3e-3;
    double beta2 = 0.97;
    double max_grad_norm = 2.0;
    double label_smoothing = 0.15;
    std::size_t epochs = 150;
    std::size_t patience = 10;
    Schedule lr_schedule = Schedule::coslog4;
    double gate_lr_factor = 3.0;
    double context_fraction = 0.8;
    std::uint64_t seed = 0;

    void validate() const;
    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Mean (smoothed) cross-entropy on probability rows, or mean squared error.
ad::NodeRef loss(ad::Tape& tape, ad::NodeRef predictions, const Targets& targets, double label_smoothing);
double loss_value(const Mat& predictions, const Targets& targets, double label_smoothing);

double schedule_multiplier(Schedule kind, std::size_t epoch, std::size_t total_epochs);

// Orthogonalizes g approximately: Frobenius-normalize, then quintic iterations.
Mat newton_schulz(const Mat& g, std::size_t steps = newton_schulz_steps);

// A trainable tensor with its optimizer group.
struct ParamSlot {
    Mat* value = nullptr;
    ParamGroup group = ParamGroup::matrix;
    std::string name;
};

// Trainable tensors of `params` allowed by `mask`, in for_each_param order.
std::vector<ParamSlot> trainable_slots(AdapterParams& params, const TrainableMask& mask);

struct OptimizerState {
    std::vector<Mat> m;  // first moment (adamw) or momentum (muon matrices)
    std::vector<Mat> v;  // second moment
    std::size_t step = 0;
};

OptimizerState init_optimizer(std::span<const ParamSlot> slots);

double global_norm(std::span<const Mat> grads);
// Rescales grads in place so the global norm is at most max_norm; returns the pre-clip norm.
double clip_global_norm(std::span<Mat> grads, double max_norm);

struct StepReport {
    double grad_norm = 0.0;
    bool skipped = false;
};

// Clips, then applies one scheduled step. A non-finite gradient skips the step.
StepReport optimizer_step(OptimizerState& state, std::span<const ParamSlot> slots, std::span<Mat> grads,
                          const TrainConfig& config, std::size_t epoch);

class EarlyStopper {
public:
    explicit EarlyStopper(std::size_t patience) : patience_(patience) {}

    // Records the metric of 1-based `epoch`; returns true when training should stop.
    bool observe(std::size_t epoch, double metric);
    bool improved() const noexcept { return improved_; }
    std::size_t best_epoch() const noexcept { return best_epoch_; }
    double best_metric() const noexcept { return best_; }

private:
    std::size_t patience_;
    std::size_t best_epoch_ = 0;
    double best_ = std::numeric_limits<double>::infinity();
    bool improved_ = false;
};

struct FitData {
    Mat x_train;
    Targets y_train;
    Mat x_val;
    Targets y_val;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_metric = 0.0;
    double alpha_mean_abs = 0.0;
    bool step_skipped = false;
};

struct FitResult {
    AdapterParams best;
    std::size_t best_epoch = 0;  // 1-based
    double best_val_metric = 0.0;
    double initial_val_metric = 0.0;
    std::vector<EpochRecord> trace;
    std::size_t skipped_steps = 0;
    bool failed = false;
    std::string failure;
};

inline constexpr std::size_t max_nonfinite_epochs = 3;

// Predictions for `queries` with the adapter applied to context and queries (eval mode).
Mat adapted_predict(const AdapterParams& params, const Backbone& backbone, const Mat& context_x,
                    const Targets& context_y, const Mat& queries);

FitResult fit(const AdapterParams& init, const Backbone& backbone, const FitData& data, const TrainConfig& config,
              const TrainableMask& mask = {});

void write_trace(std::ostream& out, std::span<const EpochRecord> trace);

}  // namespace retouche
