#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "retouche/adapter.hpp"
#include "retouche/backbone.hpp"
#include "retouche/data.hpp"
#include "retouche/guard.hpp"
#include "retouche/preprocess.hpp"
#include "retouche/trainer.hpp"

namespace retouche {

enum class Ablation { none, random_adapter, no_guard, alpha_fixed_1, alpha_init_plus_half, mlp };

std::string_view ablation_name(Ablation a) noexcept;  // CLI spelling: none, random-adapter, no-guard, alpha1, ...
Ablation parse_ablation(std::string_view text);

struct Range {
    double lo = 0.0, hi = 0.0;
};
struct IntRange {
    std::size_t lo = 0, hi = 0;
};

// Random-search space. Defaults describe configuration 0; ranges the draws.
struct SearchSpace {
    std::vector<std::size_t> num_layers{1, 2};
    Range low_rank_ratio{0.1, 0.5};
    double full_rank_probability = 1.0 / 3.0;
    std::size_t hidden_dim = 64;
    std::vector<bool> use_batch_norm{false, true};
    Range alpha_init{0.01, 0.1};  // log-uniform
    std::vector<AlphaShape> alpha_shape{AlphaShape::per_channel, AlphaShape::global};
    Range gate_lr_factor{2.0, 10.0};  // log-uniform
    std::vector<OptimizerKind> optimizer{OptimizerKind::adamw, OptimizerKind::muon};
    Range lr{1e-3, 1.5e-2};            // log-uniform
    Range weight_decay{1e-3, 5e-2};    // log-uniform
    Range max_grad_norm{1.0, 5.0};     // log-uniform
    Range label_smoothing{0.05, 0.30};
    Range beta2{0.95, 0.99};
    IntRange epochs{100, 200};
    IntRange patience{10, 15};
    std::vector<Schedule> lr_schedule{Schedule::cosine, Schedule::coslog4};
    std::vector<InitScheme> weight_init{InitScheme::xavier_normal, InitScheme::small_normal};
    std::vector<Activation> activation{Activation::none, Activation::relu};
    std::vector<PreprocVariant> preprocessor{PreprocVariant::ordinal_scaled, PreprocVariant::onehot_ordinal};
    BlockType block = BlockType::cross;
};

struct TrialConfig {
    std::size_t index = 0;
    AdapterConfig adapter;
    TrainConfig train;
    PreprocVariant preprocessor = PreprocVariant::ordinal_scaled;
    Ablation ablation = Ablation::none;

    friend bool operator==(const TrialConfig&, const TrialConfig&) = default;
};

// Configuration 0 is the default column; 1..n_random are seeded independent draws.
std::vector<TrialConfig> sample_configs(const SearchSpace& space, std::size_t n_random, std::uint64_t master_seed);

// Adjusts the configuration for an ablation (initialization, block type).
TrialConfig apply_ablation(TrialConfig config, Ablation ablation);
TrainableMask mask_for(Ablation ablation) noexcept;

// ---- single trial ----

struct SeedLineage {
    std::uint64_t master = 0;
    std::uint64_t trial = 0;
    std::uint64_t init = 0;
    std::uint64_t train = 0;
    std::uint64_t split = 0;
};

struct TrialRecord {
    std::string dataset;
    std::size_t dataset_index = 0;
    std::size_t config_index = 0;
    std::size_t fold = 0;
    SeedLineage seeds;
    bool failed = false;
    std::string failure;
    GuardDecision guard;
    double val_metric = 0.0;    // routed model on the inner validation slice
    double test_metric = 0.0;   // routed model on the holdout
    double test_base = 0.0;     // frozen backbone on the holdout
    double test_adapter = 0.0;  // adapter path on the holdout (NaN on a failed fit)
    std::size_t best_epoch = 0;
    std::size_t epochs_run = 0;
    double wall_seconds = 0.0;
    Mat test_predictions;       // routed, holdout rows; in memory only
    Mat base_predictions;
};

struct FoldData {
    Dataset train, validation, test;
};

struct TrialOutput {
    TrialRecord record;
    FittedPreproc preproc;
    AdapterParams adapter;
    FitResult fit;
};

TrialOutput run_trial(const FoldData& data, const BackboneSpec& backbone, const TrialConfig& config,
                      const SeedLineage& seeds, double tolerance = default_guard_tolerance);

// ---- protocols ----

enum class Protocol { D, T, TE };
std::string_view protocol_name(Protocol p) noexcept;  // "D", "T", "T+E"
Protocol parse_protocol(std::string_view text);

struct ProtocolOptions {
    Protocol protocol = Protocol::T;
    std::size_t n_folds = 8;
    double val_fraction = default_val_fraction;
    double test_fraction = 0.2;
    std::uint64_t master_seed = 0;
    Ablation ablation = Ablation::none;
    BackboneSpec backbone;
    double tolerance = default_guard_tolerance;
    std::size_t jobs = 1;
};

struct ProtocolScores {
    std::optional<double> base;  // frozen backbone, fold-averaged
    std::optional<double> D;
    std::optional<double> T;
    std::optional<double> TE;
    std::vector<std::size_t> selected;       // per fold config chosen by T (empty for D)
    std::vector<std::size_t> missing_folds;  // every trial failed
};

struct FallbackReport {
    std::size_t cells = 0;
    std::size_t fallbacks = 0;
    double aggregate_rate = 0.0;
    std::size_t best_config = 0;
    std::size_t best_config_folds = 0;
    std::size_t best_config_fallbacks = 0;
    double best_config_rate = 0.0;
};

struct DatasetResult {
    std::string name;
    MetricKind metric = MetricKind::mse;
    std::uint64_t fingerprint = 0;
    std::size_t n_rows = 0, n_features = 0, n_test = 0;
    ProtocolScores scores;
    FallbackReport fallback;
};

// Summaries from one dataset's records (sorted by config, then fold).
ProtocolScores summarize(std::span<const TrialRecord> records, Protocol protocol, std::size_t n_folds,
                         const Targets& test_targets);
FallbackReport fallback_report(std::span<const TrialRecord> records);

struct WinRateMatrix {
    std::vector<std::string> methods;
    Mat win;  // 100 * fraction of datasets where row beats column; diagonal NaN
    Mat tie;
};

// scores[dataset][method], lower is better unless `higher_better`.
WinRateMatrix win_rate_matrix(const std::vector<std::string>& methods, const std::vector<std::vector<double>>& scores,
                              bool higher_better = false);

struct BenchResult {
    std::vector<TrialConfig> configs;
    std::vector<TrialRecord> records;  // (dataset, config, fold) order
    std::vector<DatasetResult> datasets;
    WinRateMatrix win_rates;
};

BenchResult run_protocol(const std::vector<Dataset>& datasets, const std::vector<TrialConfig>& configs,
                         const ProtocolOptions& options);

}  // namespace retouche
