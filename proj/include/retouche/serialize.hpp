#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"

#include "retouche/adapter.hpp"
#include "retouche/guard.hpp"
#include "retouche/harness.hpp"
#include "retouche/inspect.hpp"
#include "retouche/preprocess.hpp"
#include "retouche/trainer.hpp"

namespace retouche {

using Json = nlohmann::ordered_json;

Json to_json(const Mat& m);
Mat mat_from_json(const Json& j);

Json to_json(const AdapterConfig& c);
AdapterConfig adapter_config_from_json(const Json& j);
Json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const Json& j);
Json to_json(const TrialConfig& c);
TrialConfig trial_config_from_json(const Json& j);

Json to_json(const AdapterParams& p);
AdapterParams adapter_from_json(const Json& j);
Json to_json(const FittedPreproc& p);
FittedPreproc preproc_from_json(const Json& j);
Json to_json(const GuardDecision& g);
GuardDecision guard_from_json(const Json& j);

// Trial records omit wall time and predictions so reruns compare byte-for-byte.
Json to_json(const TrialRecord& r);
Json summary_json(const BenchResult& bench, const ProtocolOptions& options);

Json report_json(const InteractionReport& report, const std::vector<std::string>& channel_names);

std::string hex64(std::uint64_t v);

// Config files: one `key = value` per line, `#` starts a comment. Keys are the
// TrialConfig field names (num_layers, low_rank_ratio, lr, ...); see README.
TrialConfig parse_config_text(std::string_view text, TrialConfig base = {});
TrialConfig load_config_file(const std::filesystem::path& path, TrialConfig base = {});

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& j);

}  // namespace retouche
