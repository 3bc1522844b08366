#pragma once

#include <string>

#include <json.hpp>

#include "cml/datagen.hpp"
#include "cml/trainer.hpp"

namespace cml {

using Json = nlohmann::json;

// Config schema: every TrainConfig field under its snake_case name. The
// optional "profile" key ("desk" | "paper") selects the defaults the other
// keys override. "ablation" applies the loss-toggle mapping.
Json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const Json& j, bool* seed_in_json = nullptr);

// {"num_classes", "samples_per_class", "input_dim", "seed",
//  "sigma": [..] or "sigma_range": [lo, hi]} (default ramp [0.1, 0.8])
Json to_json(const SynthSpec& spec);
SynthSpec synth_spec_from_json(const Json& j, bool* seed_in_json = nullptr);

Json to_json(const EvalSummary& summary);
Json to_json(const VerificationReport& report);
Json to_json(const HarnessTable& table);
Json to_json(const IterationRecord& record);
Json to_json(const EpochRecord& record);
Json to_json(const ClusterDebugRecord& record);

std::string iso_timestamp();

Json load_json_file(const std::string& path);
void write_json_file(const Json& j, const std::string& path);

}  // namespace cml
