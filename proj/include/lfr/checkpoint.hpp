#pragma once

#include "lfr/model_core.hpp"

#include <json.hpp>

#include <functional>
#include <string>

namespace lfr {

inline constexpr const char* kCheckpointFormat = "lfr-augment/1";

// Rebuilds baselines from their describe() output. "affine", "msd2" and
// "normalized" are registered by default.
using BaselineFactory = std::function<BaselinePtr(const nlohmann::json&)>;
void register_baseline(const std::string& id, BaselineFactory f);
BaselinePtr baseline_from_json(const nlohmann::json& j);

nlohmann::json model_to_json(const AugmentedModel& m);
AugmentedModel model_from_json(const nlohmann::json& j);

void save_checkpoint(const AugmentedModel& m, const std::string& path,
                     const nlohmann::json& extra = nullptr);
AugmentedModel load_checkpoint(const std::string& path);
nlohmann::json read_json_file(const std::string& path);

}  // namespace lfr
