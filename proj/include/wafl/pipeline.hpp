#pragma once

#include <span>
#include <string>
#include <vector>

#include "wafl/config.hpp"
#include "wafl/eval.hpp"
#include "wafl/trainer.hpp"

namespace wafl {

/// Initializes a model whose input widths match `dataset` and trains it.
TrainResult train_run(const Dataset& dataset, const TrainRunConfig& config, const BatchObserver& observer = {});

/// Scores `dataset` with the fused head and evaluates the proposals.
EvalReport evaluate_model(const ModelBundle& model, const Dataset& dataset, const EvalConfig& config);

struct AblationEntry {
    LossKind kind = LossKind::ACA;
    std::vector<std::pair<std::uint64_t, EvalReport>> per_seed;
    /// Per-metric median over seeds.
    EvalReport median;
};

/// Retrains once per (loss kind, seed) with otherwise identical settings and
/// evaluates each model on `test`.
std::vector<AblationEntry> run_ablation(const Dataset& train, const Dataset& test, const AblateConfig& config,
                                        std::span<const LossKind> kinds);

std::string ablation_json(const std::vector<AblationEntry>& entries);

/// Median of per-seed reports, metric by metric.
EvalReport median_report(const std::vector<EvalReport>& reports);

}  // namespace wafl
