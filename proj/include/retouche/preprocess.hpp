#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "retouche/data.hpp"
#include "retouche/mat.hpp"

namespace retouche {

enum class PreprocVariant { ordinal_scaled, onehot_ordinal };

std::string_view preproc_name(PreprocVariant v) noexcept;
PreprocVariant parse_preproc(std::string_view text);

struct PreprocSpec {
    PreprocVariant variant = PreprocVariant::ordinal_scaled;
    std::size_t onehot_max_levels = 8;
};

// Token substituted for missing categorical cells before level coding.
inline const std::string missing_token = "⟨missing⟩";

struct ColumnTransform {
    std::string name;
    ColumnKind kind = ColumnKind::numeric;
    double median = 0.0;  // numeric only
    double mean = 0.0;
    double sd = 1.0;
    std::vector<std::string> levels;  // categorical, first-appearance order
    bool onehot = false;

    std::size_t width() const noexcept { return onehot ? levels.size() : 1; }
};

struct FittedPreproc {
    PreprocSpec spec;
    std::vector<ColumnTransform> columns;
    std::size_t output_dim = 0;

    std::vector<std::string> channel_names() const;
};

FittedPreproc fit_preproc(const Dataset& train_rows, const PreprocSpec& spec);

// Unseen categorical levels map to ordinal code k (before standardization) or an all-zero one-hot block.
Mat transform(const FittedPreproc& fitted, const Dataset& rows);

}  // namespace retouche
