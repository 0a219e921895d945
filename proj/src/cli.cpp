#include "wafl/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "wafl/config.hpp"
#include "wafl/error.hpp"
#include "wafl/gradcheck.hpp"
#include "wafl/pipeline.hpp"

namespace wafl {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidConfig: return kExitUsage;
        case ErrorCode::NonFinite: return kExitNumeric;
        default: return kExitData;
    }
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

void write_run_json(const fs::path& dir, ordered_json echo) {
    write_text(dir / "run.json", echo.dump(2) + "\n");
}

fs::path parent_or_cwd(const fs::path& file) { return file.has_parent_path() ? file.parent_path() : fs::path("."); }

json load_config_or_empty(const std::string& path) { return path.empty() ? json::object() : read_json_file(path); }

std::vector<std::vector<double>> load_scores(const fs::path& path, const Dataset& dataset) {
    const auto j = read_json_file(path);
    if (!j.is_object()) throw Error(ErrorCode::FormatError, "scores file must map video id to a score list");
    std::vector<std::vector<double>> scores;
    for (const auto& video : dataset.videos) {
        auto it = j.find(video.id);
        if (it == j.end()) throw Error(ErrorCode::ScoreCountMismatch, "no scores for video '" + video.id + "'");
        try {
            scores.push_back(it->get<std::vector<double>>());
        } catch (const json::exception&) {
            throw Error(ErrorCode::FormatError, "scores for '" + video.id + "' must be a list of numbers");
        }
    }
    return scores;
}

std::vector<LossKind> parse_losses(const std::string& list) {
    std::vector<LossKind> kinds;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) kinds.push_back(parse_loss_kind(item));
    }
    if (kinds.empty()) throw Error(ErrorCode::InvalidConfig, "--losses must name at least one loss kind");
    return kinds;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
    std::string config, out;
    std::optional<std::uint64_t> seed;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
    auto cfg = parse_synth_config(read_json_file(a.config));
    if (a.seed) cfg.seed = *a.seed;
    const auto dataset = generate(cfg);
    const fs::path root(a.out);
    auto [train, test] = split_dataset(dataset, cfg.n_videos);
    save_dataset(train, root / "train");
    if (cfg.test_videos > 0) save_dataset(test, root / "test");
    write_run_json(root, {{"command", "synth"}, {"config", to_json(cfg)}});
    out << "wrote " << train.videos.size() << " train / " << test.videos.size() << " test videos to " << root.string()
        << "\n";
    return kExitOk;
}

struct TrainArgs {
    std::string config, data, out;
    std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
    auto cfg = parse_train_config(read_json_file(a.config));
    if (a.seed) {
        cfg.train.seed = *a.seed;
        cfg.model.seed = *a.seed;
    }
    const auto dataset = load_dataset(a.data);
    const auto result = train_run(dataset, cfg);
    const fs::path root(a.out);
    fs::create_directories(root);
    save_checkpoint(result.model, root / "checkpoint.bin");
    write_text(root / "loss_log.jsonl", loss_log_jsonl(result.log));
    write_run_json(root, {{"command", "train"}, {"data", a.data}, {"config", to_json(cfg)}});
    if (!result.log.empty()) {
        out << "final loss " << result.log.back().loss.total << " after " << result.log.size() << " iterations\n";
    }
    return kExitOk;
}

struct EvalArgs {
    std::string ckpt, scores, data, config, report;
    bool merge = false;
    std::optional<double> merge_threshold;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    if (a.ckpt.empty() == a.scores.empty()) {
        throw Error(ErrorCode::InvalidConfig, "eval needs exactly one of --ckpt or --scores");
    }
    auto cfg = parse_eval_config(load_config_or_empty(a.config));
    if (a.merge) cfg.merge_adjacent = true;
    if (a.merge_threshold) cfg.merge_score_threshold = *a.merge_threshold;
    cfg.validate();
    const auto dataset = load_dataset(a.data);
    const auto scores = a.ckpt.empty() ? load_scores(a.scores, dataset) : score_dataset(load_checkpoint(a.ckpt), dataset);
    const auto report = evaluate(dataset, scores, cfg);
    const auto text = report_json(report);
    write_text(a.report, text);
    write_run_json(parent_or_cwd(a.report), {{"command", "eval"},
                                             {"ckpt", a.ckpt},
                                             {"scores", a.scores},
                                             {"data", a.data},
                                             {"config", to_json(cfg)}});
    out << text;
    return kExitOk;
}

struct GradcheckArgs {
    std::string report;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
    const auto rows = run_gradcheck();
    bool all_pass = true;
    ordered_json table = ordered_json::array();
    out << std::left << std::setw(18) << "check" << std::setw(8) << "points" << std::setw(14) << "max_rel_err"
        << "result\n";
    for (const auto& r : rows) {
        all_pass = all_pass && r.pass;
        out << std::left << std::setw(18) << r.name << std::setw(8) << r.points << std::setw(14) << std::scientific
            << std::setprecision(3) << r.max_rel_error << std::defaultfloat << (r.pass ? "PASS" : "FAIL") << "\n";
        table.push_back({{"name", r.name},
                         {"points", r.points},
                         {"max_rel_error", r.max_rel_error},
                         {"tolerance", r.tolerance},
                         {"pass", r.pass}});
    }
    if (!a.report.empty()) {
        write_text(a.report, ordered_json{{"checks", table}, {"pass", all_pass}}.dump(2) + "\n");
        write_run_json(parent_or_cwd(a.report), {{"command", "gradcheck"}});
    }
    return all_pass ? kExitOk : kExitNumeric;
}

struct AblateArgs {
    std::string config, data, losses = "aca,focal,bce", report;
};

int cmd_ablate(const AblateArgs& a, std::ostream& out) {
    const auto cfg = parse_ablate_config(read_json_file(a.config));
    const auto kinds = parse_losses(a.losses);
    const fs::path root(a.data);
    const auto train = load_dataset(root / "train");
    const auto test = load_dataset(root / "test");
    const auto entries = run_ablation(train, test, cfg, kinds);
    const auto text = ablation_json(entries);
    write_text(a.report, text);
    write_run_json(parent_or_cwd(a.report),
                   {{"command", "ablate"}, {"data", a.data}, {"losses", a.losses}, {"config", to_json(cfg)}});
    out << text;
    return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Word-anchored temporal forgery localization toolkit"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
    synth_cmd->add_option("--config", synth.config, "SynthConfig JSON")->required();
    synth_cmd->add_option("--out", synth.out, "Output directory")->required();
    synth_cmd->add_option("--seed", synth.seed, "Override the config seed");

    TrainArgs trn;
    auto* train_cmd = app.add_subcommand("train", "Train a model");
    train_cmd->add_option("--config", trn.config, "TrainConfig JSON")->required();
    train_cmd->add_option("--data", trn.data, "Dataset directory")->required();
    train_cmd->add_option("--out", trn.out, "Output directory")->required();
    train_cmd->add_option("--seed", trn.seed, "Override the config seed");

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint or a scores file");
    eval_cmd->add_option("--ckpt", ev.ckpt, "Checkpoint file");
    eval_cmd->add_option("--scores", ev.scores, "JSON scores file {video id: [score per token]}");
    eval_cmd->add_option("--data", ev.data, "Dataset directory")->required();
    eval_cmd->add_option("--config", ev.config, "EvalConfig JSON");
    eval_cmd->add_option("--report", ev.report, "Report path")->required();
    eval_cmd->add_flag("--merge-adjacent", ev.merge, "Merge runs of above-threshold tokens");
    eval_cmd->add_option("--merge-threshold", ev.merge_threshold, "Score threshold for merging");

    GradcheckArgs gc;
    auto* gradcheck_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
    gradcheck_cmd->add_option("--report", gc.report, "Optional JSON report path");

    AblateArgs ab;
    auto* ablate_cmd = app.add_subcommand("ablate", "Retrain per loss kind and compare");
    ablate_cmd->add_option("--config", ab.config, "AblateConfig JSON")->required();
    ablate_cmd->add_option("--data", ab.data, "Directory holding train/ and test/")->required();
    ablate_cmd->add_option("--losses", ab.losses, "Comma-separated loss kinds");
    ablate_cmd->add_option("--report", ab.report, "Report path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n" << app.help();
        return kExitUsage;
    }

    try {
        if (*synth_cmd) return cmd_synth(synth, out);
        if (*train_cmd) return cmd_train(trn, out);
        if (*eval_cmd) return cmd_eval(ev, out);
        if (*gradcheck_cmd) return cmd_gradcheck(gc, out);
        if (*ablate_cmd) return cmd_ablate(ab, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}

}  // namespace wafl
