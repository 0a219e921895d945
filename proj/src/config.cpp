#include "wafl/config.hpp"

#include <fstream>

#include "wafl/error.hpp"
#include "wafl/json_config.hpp"

namespace wafl {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void read_range(const json& j, std::string_view key, IntRange& out, std::string_view ctx) {
    std::vector<std::int64_t> pair{out.min, out.max};
    read_optional(j, key, pair, ctx);
    if (pair.size() != 2) {
        throw Error(ErrorCode::InvalidConfig, std::string(ctx) + ": '" + std::string(key) + "' must be [min, max]");
    }
    out = {pair[0], pair[1]};
}

ordered_json range_json(const IntRange& r) { return ordered_json::array({r.min, r.max}); }

ordered_json model_json(const ModelConfig& c) { return ordered_json::parse(model_config_json(c)); }

}  // namespace

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::FormatError, path.string() + ": " + e.what());
    }
}

SynthConfig parse_synth_config(const json& j) {
    constexpr std::string_view ctx = "synth";
    reject_unknown_keys(j,
                        {"n_videos", "test_videos", "tokens_per_video", "fake_token_rate", "run_length",
                         "modality_mix", "k_v", "k_a", "T_v_raw", "T_a_raw", "artifact_amplitude", "semantic_scale",
                         "seed"},
                        ctx);
    SynthConfig c;
    read_optional(j, "n_videos", c.n_videos, ctx);
    read_optional(j, "test_videos", c.test_videos, ctx);
    read_range(j, "tokens_per_video", c.tokens_per_video, ctx);
    read_optional(j, "fake_token_rate", c.fake_token_rate, ctx);
    read_range(j, "run_length", c.run_length, ctx);
    std::vector<double> mix(c.modality_mix.begin(), c.modality_mix.end());
    read_optional(j, "modality_mix", mix, ctx);
    if (mix.size() != 3) throw Error(ErrorCode::InvalidConfig, "synth: modality_mix must have 3 entries");
    std::copy(mix.begin(), mix.end(), c.modality_mix.begin());
    read_optional(j, "k_v", c.k_v, ctx);
    read_optional(j, "k_a", c.k_a, ctx);
    read_range(j, "T_v_raw", c.T_v_raw, ctx);
    read_range(j, "T_a_raw", c.T_a_raw, ctx);
    read_optional(j, "artifact_amplitude", c.artifact_amplitude, ctx);
    read_optional(j, "semantic_scale", c.semantic_scale, ctx);
    read_optional(j, "seed", c.seed, ctx);
    c.validate();
    return c;
}

TrainRunConfig parse_train_config(const json& j) {
    constexpr std::string_view ctx = "train";
    reject_unknown_keys(j,
                        {"iterations", "warmup", "batch_size", "lr_max", "weight_decay", "beta1", "beta2", "adam_eps",
                         "loss_kind", "seed", "aca", "model"},
                        ctx);
    TrainRunConfig c;
    auto& t = c.train;
    read_optional(j, "iterations", t.iterations, ctx);
    read_optional(j, "warmup", t.warmup, ctx);
    read_optional(j, "batch_size", t.batch_size, ctx);
    read_optional(j, "lr_max", t.lr_max, ctx);
    read_optional(j, "weight_decay", t.weight_decay, ctx);
    read_optional(j, "beta1", t.beta1, ctx);
    read_optional(j, "beta2", t.beta2, ctx);
    read_optional(j, "adam_eps", t.adam_eps, ctx);
    std::string kind(to_string(t.loss_kind));
    read_optional(j, "loss_kind", kind, ctx);
    t.loss_kind = parse_loss_kind(kind);
    read_optional(j, "seed", t.seed, ctx);
    if (auto it = j.find("aca"); it != j.end()) {
        constexpr std::string_view actx = "train.aca";
        reject_unknown_keys(*it, {"gamma_plus", "gamma_minus", "mu", "eps"}, actx);
        read_optional(*it, "gamma_plus", t.aca.gamma_plus, actx);
        read_optional(*it, "gamma_minus", t.aca.gamma_minus, actx);
        read_optional(*it, "mu", t.aca.mu, actx);
        read_optional(*it, "eps", t.aca.eps, actx);
    }
    c.model.seed = t.seed;
    if (auto it = j.find("model"); it != j.end()) {
        json model = *it;
        if (model.is_object() && !model.contains("seed")) model["seed"] = t.seed;
        c.model = model_config_from_json(model.dump());
    }
    t.validate();
    return c;
}

EvalConfig parse_eval_config(const json& j) {
    constexpr std::string_view ctx = "eval";
    reject_unknown_keys(j, {"ap_thresholds", "ar_caps", "ar_iou_grid", "merge_adjacent", "merge_score_threshold"},
                        ctx);
    EvalConfig c;
    read_optional(j, "ap_thresholds", c.ap_thresholds, ctx);
    read_optional(j, "ar_caps", c.ar_caps, ctx);
    read_optional(j, "ar_iou_grid", c.ar_iou_grid, ctx);
    read_optional(j, "merge_adjacent", c.merge_adjacent, ctx);
    read_optional(j, "merge_score_threshold", c.merge_score_threshold, ctx);
    c.validate();
    return c;
}

AblateConfig parse_ablate_config(const json& j) {
    constexpr std::string_view ctx = "ablate";
    reject_unknown_keys(j, {"train", "eval", "seeds"}, ctx);
    AblateConfig c;
    c.run = parse_train_config(j.value("train", json::object()));
    c.eval = parse_eval_config(j.value("eval", json::object()));
    read_optional(j, "seeds", c.seeds, ctx);
    if (c.seeds.empty()) throw Error(ErrorCode::InvalidConfig, "ablate: seeds must not be empty");
    return c;
}

ordered_json to_json(const SynthConfig& c) {
    return {{"n_videos", c.n_videos},
            {"test_videos", c.test_videos},
            {"tokens_per_video", range_json(c.tokens_per_video)},
            {"fake_token_rate", c.fake_token_rate},
            {"run_length", range_json(c.run_length)},
            {"modality_mix", c.modality_mix},
            {"k_v", c.k_v},
            {"k_a", c.k_a},
            {"T_v_raw", range_json(c.T_v_raw)},
            {"T_a_raw", range_json(c.T_a_raw)},
            {"artifact_amplitude", c.artifact_amplitude},
            {"semantic_scale", c.semantic_scale},
            {"seed", c.seed}};
}

ordered_json to_json(const TrainRunConfig& c) {
    const auto& t = c.train;
    return {{"iterations", t.iterations},
            {"warmup", t.warmup},
            {"batch_size", t.batch_size},
            {"lr_max", t.lr_max},
            {"weight_decay", t.weight_decay},
            {"beta1", t.beta1},
            {"beta2", t.beta2},
            {"adam_eps", t.adam_eps},
            {"loss_kind", to_string(t.loss_kind)},
            {"seed", t.seed},
            {"aca",
             {{"gamma_plus", t.aca.gamma_plus},
              {"gamma_minus", t.aca.gamma_minus},
              {"mu", t.aca.mu},
              {"eps", t.aca.eps}}},
            {"model", model_json(c.model)}};
}

ordered_json to_json(const EvalConfig& c) {
    return {{"ap_thresholds", c.ap_thresholds},
            {"ar_caps", c.ar_caps},
            {"ar_iou_grid", c.ar_iou_grid},
            {"merge_adjacent", c.merge_adjacent},
            {"merge_score_threshold", c.merge_score_threshold}};
}

ordered_json to_json(const AblateConfig& c) {
    return {{"train", to_json(c.run)}, {"eval", to_json(c.eval)}, {"seeds", c.seeds}};
}

}  // namespace wafl
