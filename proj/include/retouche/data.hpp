#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace retouche {

enum class TaskKind { binary, multiclass, regression };
enum class TaskHint { automatic, binary, multiclass, regression };
enum class ColumnKind { numeric, categorical };

std::string_view task_name(TaskKind kind) noexcept;
TaskHint parse_task_hint(std::string_view text);

struct Column {
    std::string name;
    ColumnKind kind = ColumnKind::numeric;
    // Exactly one of these is populated, matching `kind`; nullopt marks a missing cell.
    std::vector<std::optional<double>> numbers;
    std::vector<std::optional<std::string>> tokens;

    std::size_t size() const noexcept { return kind == ColumnKind::numeric ? numbers.size() : tokens.size(); }
    bool missing(std::size_t row) const;
};

// Feature table plus target. Classification targets are stored as class
// indices into `classes`; regression targets as raw values.
struct Dataset {
    std::string name;
    std::vector<Column> columns;
    std::string target_name;
    TaskKind task = TaskKind::regression;
    std::vector<double> y;
    std::vector<std::string> classes;

    std::size_t n_rows() const noexcept { return y.size(); }
    std::size_t n_features() const noexcept { return columns.size(); }
    std::size_t n_classes() const noexcept { return task == TaskKind::regression ? 0 : classes.size(); }
    int label(std::size_t row) const { return static_cast<int>(y[row]); }

    Dataset subset(std::span<const std::size_t> rows) const;
    void validate() const;
    // FNV-1a over the CSV rendering; stable across runs.
    std::uint64_t fingerprint() const;
};

Dataset read_csv(std::istream& in, std::string_view target_column, TaskHint hint = TaskHint::automatic,
                 std::string name = "csv");
Dataset load_csv(const std::filesystem::path& path, std::string_view target_column,
                 TaskHint hint = TaskHint::automatic);
void write_csv(const Dataset& dataset, std::ostream& out);

// Distinct-value count above which a numeric target is treated as regression.
inline constexpr std::size_t regression_distinct_threshold = 10;

enum class Generator { planted_interaction, linear_aligned, monotone_single };

std::string_view generator_name(Generator g) noexcept;
Generator parse_generator(std::string_view text);

struct SynthSpec {
    Generator generator = Generator::planted_interaction;
    std::size_t n = 500;
    std::size_t d = 6;
    double noise_sd = 0.1;
    std::uint64_t seed = 0;
    TaskKind task = TaskKind::regression;  // regression or binary
    std::optional<std::vector<double>> weights;  // linear_aligned override

    void validate() const;
};

// Parses "planted_interaction:n=500,d=6,noise=0.1,seed=3,task=binary".
SynthSpec parse_synth_spec(std::string_view text);
std::string describe(const SynthSpec& spec);

Dataset generate(const SynthSpec& spec);

struct FoldSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
};

struct SplitPlan {
    std::size_t n_folds = 0;
    double val_fraction = 0.2;
    std::vector<std::size_t> fold_of_row;
    std::vector<FoldSplit> folds;
};

inline constexpr double default_val_fraction = 0.2;

// Stratified (classification) k-fold plan; each fold's remainder is split into
// training rows and an inner validation slice of size val_fraction * remainder.
SplitPlan make_splits(const Dataset& dataset, std::size_t n_folds, double val_fraction, std::uint64_t seed);

// Single-model plan: no held-out fold, all rows split into training + inner validation.
SplitPlan single_fold_plan(const Dataset& dataset, double val_fraction, std::uint64_t seed);

struct Holdout {
    std::vector<std::size_t> development;
    std::vector<std::size_t> test;
};

// Stratified outer test split.
Holdout holdout_split(const Dataset& dataset, double test_fraction, std::uint64_t seed);

}  // namespace retouche
