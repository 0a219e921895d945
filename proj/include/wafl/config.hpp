#pragma once

#include <filesystem>
#include <vector>

#include <json.hpp>

#include "wafl/eval.hpp"
#include "wafl/model.hpp"
#include "wafl/synth.hpp"
#include "wafl/trainer.hpp"

namespace wafl {

/// Training settings plus the model shape. Feature widths k_v/k_a are taken
/// from the data at train time.
struct TrainRunConfig {
    TrainConfig train;
    ModelConfig model;
};

struct AblateConfig {
    TrainRunConfig run;
    EvalConfig eval;
    std::vector<std::uint64_t> seeds{0};
};

nlohmann::json read_json_file(const std::filesystem::path& path);

SynthConfig parse_synth_config(const nlohmann::json& j);
TrainRunConfig parse_train_config(const nlohmann::json& j);
EvalConfig parse_eval_config(const nlohmann::json& j);
AblateConfig parse_ablate_config(const nlohmann::json& j);

nlohmann::ordered_json to_json(const SynthConfig& c);
nlohmann::ordered_json to_json(const TrainRunConfig& c);
nlohmann::ordered_json to_json(const EvalConfig& c);
nlohmann::ordered_json to_json(const AblateConfig& c);

}  // namespace wafl
