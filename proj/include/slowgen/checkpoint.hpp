#pragma once

#include <string>

#include "slowgen/vi_engine.hpp"

namespace slowgen {

// JSON snapshot of a trained model: theta, per-sequence phi, training curve
// and dataset metadata. Serialization is deterministic; save -> load -> save
// reproduces the file byte for byte.
std::string checkpoint_to_string(const TrainedModel& tm);
TrainedModel checkpoint_from_string(const std::string& text);

void save_checkpoint(const TrainedModel& tm, const std::string& path);
TrainedModel load_checkpoint(const std::string& path);

}  // namespace slowgen
