#pragma once

#include <span>
#include <string_view>

#include "retouche/backbone.hpp"
#include "retouche/mat.hpp"

namespace retouche {

// Deployment metrics, all lower-is-better.
enum class MetricKind { one_minus_auc, logloss, mse };

std::string_view metric_name(MetricKind m) noexcept;
MetricKind parse_metric(std::string_view text);
MetricKind metric_for(TaskKind task) noexcept;

// Mann–Whitney AUC with average ranks for ties. 0.5 when one class is absent.
double auc(std::span<const double> scores, std::span<const int> labels);
// Mean negative log of the true-class probability, floored at probability_floor.
double logloss(const Mat& probabilities, const Targets& targets);
double mse(const Mat& predictions, const Targets& targets);

// Binary: 1 - AUC on the class-1 column. Multiclass: logloss. Regression: MSE.
double deployment_metric(const Mat& predictions, const Targets& targets);

}  // namespace retouche
