#include "wafl/pipeline.hpp"

#include <algorithm>

#include <json.hpp>

#include "wafl/error.hpp"

namespace wafl {

TrainResult train_run(const Dataset& dataset, const TrainRunConfig& config, const BatchObserver& observer) {
    dataset.validate();
    ModelConfig model_cfg = config.model;
    model_cfg.k_v = dataset.k_v();
    model_cfg.k_a = dataset.k_a();
    if (model_cfg.k_v == 0 || model_cfg.k_a == 0) {
        throw Error(ErrorCode::DegenerateDataset, "dataset has no token features");
    }
    return train(dataset, init_model(model_cfg), config.train, observer);
}

EvalReport evaluate_model(const ModelBundle& model, const Dataset& dataset, const EvalConfig& config) {
    return evaluate(dataset, score_dataset(model, dataset), config);
}

namespace {

double median(std::vector<double> values) {
    std::ranges::sort(values);
    const std::size_t n = values.size();
    if (n == 0) return 0.0;
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

EvalReport median_report(const std::vector<EvalReport>& reports) {
    if (reports.empty()) return {};
    EvalReport out = reports.front();
    for (std::size_t i = 0; i < out.ap.size(); ++i) {
        std::vector<double> vals;
        for (const auto& r : reports) vals.push_back(r.ap.at(i).second);
        out.ap[i].second = median(std::move(vals));
    }
    for (std::size_t i = 0; i < out.ar.size(); ++i) {
        std::vector<double> vals;
        for (const auto& r : reports) vals.push_back(r.ar.at(i).second);
        out.ar[i].second = median(std::move(vals));
    }
    return out;
}

std::vector<AblationEntry> run_ablation(const Dataset& train, const Dataset& test, const AblateConfig& config,
                                        std::span<const LossKind> kinds) {
    std::vector<AblationEntry> entries;
    for (auto kind : kinds) {
        AblationEntry entry;
        entry.kind = kind;
        std::vector<EvalReport> reports;
        for (auto seed : config.seeds) {
            TrainRunConfig run = config.run;
            run.train.loss_kind = kind;
            run.train.seed = seed;
            run.model.seed = seed;
            const auto trained = train_run(train, run);
            auto report = evaluate_model(trained.model, test, config.eval);
            reports.push_back(report);
            entry.per_seed.emplace_back(seed, std::move(report));
        }
        entry.median = median_report(reports);
        entries.push_back(std::move(entry));
    }
    return entries;
}

std::string ablation_json(const std::vector<AblationEntry>& entries) {
    nlohmann::ordered_json losses = nlohmann::ordered_json::object();
    for (const auto& e : entries) {
        nlohmann::ordered_json seeds = nlohmann::ordered_json::object();
        for (const auto& [seed, report] : e.per_seed) {
            seeds[std::to_string(seed)] = nlohmann::ordered_json::parse(report_json(report));
        }
        losses[std::string(to_string(e.kind))] = {
            {"median", nlohmann::ordered_json::parse(report_json(e.median))},
            {"seeds", seeds},
        };
    }
    return nlohmann::ordered_json{{"losses", losses}}.dump(2) + "\n";
}

}  // namespace wafl
