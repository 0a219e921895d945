#include "wafl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <json.hpp>

#include "wafl/error.hpp"

namespace wafl {

namespace {

struct Ranked {
    const Proposal* proposal;
    std::size_t video;
};

// Greedy match of `proposal` against unmatched gt: highest IoU wins, ties to the earlier gt.
bool match(const Proposal& proposal, std::span<const Interval> gt, std::vector<bool>& taken, double tau) {
    double best = -1.0;
    std::size_t best_idx = gt.size();
    for (std::size_t g = 0; g < gt.size(); ++g) {
        if (taken[g]) continue;
        const double iou = temporal_iou({proposal.t_s, proposal.t_e}, gt[g]);
        if (iou > best) {
            best = iou;
            best_idx = g;
        }
    }
    if (best_idx == gt.size() || best < tau) return false;
    taken[best_idx] = true;
    return true;
}

}  // namespace

std::vector<double> EvalConfig::default_ar_grid() {
    std::vector<double> grid;
    for (int i = 10; i <= 19; ++i) grid.push_back(static_cast<double>(i) / 20.0);
    return grid;
}

void EvalConfig::validate() const {
    for (double t : ap_thresholds) {
        if (!(t > 0.0 && t <= 1.0)) throw Error(ErrorCode::InvalidConfig, "AP thresholds must lie in (0, 1]");
    }
    for (double t : ar_iou_grid) {
        if (!(t > 0.0 && t <= 1.0)) throw Error(ErrorCode::InvalidConfig, "AR IoU grid must lie in (0, 1]");
    }
    if (ar_iou_grid.empty()) throw Error(ErrorCode::InvalidConfig, "AR IoU grid must not be empty");
    for (auto c : ar_caps) {
        if (c < 1) throw Error(ErrorCode::InvalidConfig, "AR caps must be >= 1");
    }
    if (!(merge_score_threshold >= 0.0 && merge_score_threshold <= 1.0)) {
        throw Error(ErrorCode::InvalidConfig, "merge_score_threshold must lie in [0, 1]");
    }
}

bool ranks_before(const Proposal& a, const Proposal& b) noexcept {
    if (a.score != b.score) return a.score > b.score;
    return a.t_s < b.t_s;
}

std::vector<Proposal> generate_proposals(const VideoRecord& video, std::span<const double> scores,
                                         const EvalConfig& cfg) {
    if (scores.size() != video.tokens.size()) {
        throw Error(ErrorCode::ScoreCountMismatch, "video '" + video.id + "' has " +
                                                       std::to_string(video.tokens.size()) + " tokens but " +
                                                       std::to_string(scores.size()) + " scores");
    }
    std::vector<Proposal> out;
    out.reserve(scores.size());
    const auto& toks = video.tokens;
    for (std::size_t i = 0; i < toks.size();) {
        if (cfg.merge_adjacent && scores[i] >= cfg.merge_score_threshold) {
            std::size_t j = i;
            double run_min = scores[i];
            while (j + 1 < toks.size() && scores[j + 1] >= cfg.merge_score_threshold) {
                ++j;
                run_min = std::min(run_min, scores[j]);
            }
            out.push_back({toks[i].t_s, toks[j].t_e, run_min});
            i = j + 1;
        } else {
            out.push_back({toks[i].t_s, toks[i].t_e, scores[i]});
            ++i;
        }
    }
    std::ranges::stable_sort(out, ranks_before);
    return out;
}

double temporal_iou(Interval a, Interval b) noexcept {
    const double inter = std::min(a.t_e, b.t_e) - std::max(a.t_s, b.t_s);
    if (inter <= 0.0) return 0.0;
    const double uni = std::max(a.t_e, b.t_e) - std::min(a.t_s, b.t_s);
    if (uni <= 0.0) return 0.0;
    return std::min(1.0, inter / uni);
}

double average_precision(std::span<const VideoProposals> videos, double tau, bool* no_gt) {
    std::size_t total_gt = 0;
    std::vector<Ranked> ranked;
    for (std::size_t v = 0; v < videos.size(); ++v) {
        total_gt += videos[v].gt.size();
        for (const auto& p : videos[v].proposals) ranked.push_back({&p, v});
    }
    if (no_gt != nullptr) *no_gt = total_gt == 0;
    if (total_gt == 0) return 0.0;

    std::ranges::stable_sort(ranked, [&](const Ranked& a, const Ranked& b) {
        if (a.proposal->score != b.proposal->score) return a.proposal->score > b.proposal->score;
        if (a.proposal->t_s != b.proposal->t_s) return a.proposal->t_s < b.proposal->t_s;
        return videos[a.video].video_id < videos[b.video].video_id;
    });

    std::vector<std::vector<bool>> taken(videos.size());
    for (std::size_t v = 0; v < videos.size(); ++v) taken[v].assign(videos[v].gt.size(), false);

    std::vector<double> precision(ranked.size());
    std::vector<bool> is_tp(ranked.size());
    std::size_t tp = 0;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        const auto v = ranked[i].video;
        is_tp[i] = match(*ranked[i].proposal, videos[v].gt, taken[v], tau);
        if (is_tp[i]) ++tp;
        precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    }
    // Monotone envelope, then sum precision over each recall increment.
    for (std::size_t i = ranked.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        if (is_tp[i]) sum += precision[i];
    }
    return std::min(1.0, sum / static_cast<double>(total_gt));
}

double average_recall_at_n(std::span<const VideoProposals> videos, std::size_t cap,
                           std::span<const double> iou_grid) {
    std::size_t total_gt = 0;
    for (const auto& v : videos) total_gt += v.gt.size();
    if (total_gt == 0 || iou_grid.empty()) return 0.0;

    double sum = 0.0;
    for (double tau : iou_grid) {
        std::size_t matched = 0;
        for (const auto& v : videos) {
            if (v.gt.empty()) continue;
            std::vector<Proposal> top = v.proposals;
            std::ranges::stable_sort(top, ranks_before);
            if (top.size() > cap) top.resize(cap);
            std::vector<bool> taken(v.gt.size(), false);
            for (const auto& p : top) {
                if (match(p, v.gt, taken, tau)) ++matched;
            }
        }
        sum += static_cast<double>(matched) / static_cast<double>(total_gt);
    }
    return std::min(1.0, sum / static_cast<double>(iou_grid.size()));
}

std::vector<VideoProposals> build_video_proposals(const Dataset& dataset,
                                                  const std::vector<std::vector<double>>& scores,
                                                  const EvalConfig& cfg) {
    if (scores.size() != dataset.videos.size()) {
        throw Error(ErrorCode::ScoreCountMismatch, "one score list per video required");
    }
    std::vector<VideoProposals> out;
    out.reserve(dataset.videos.size());
    for (std::size_t v = 0; v < dataset.videos.size(); ++v) {
        const auto& video = dataset.videos[v];
        VideoProposals vp;
        vp.video_id = video.id;
        vp.proposals = generate_proposals(video, scores[v], cfg);
        for (const auto& seg : video.gt_segments) vp.gt.push_back({seg.t_s, seg.t_e});
        out.push_back(std::move(vp));
    }
    return out;
}

EvalReport evaluate(const Dataset& dataset, const std::vector<std::vector<double>>& scores, const EvalConfig& cfg) {
    cfg.validate();
    const auto videos = build_video_proposals(dataset, scores, cfg);
    EvalReport report;
    report.videos = videos.size();
    for (const auto& v : videos) {
        report.proposals += v.proposals.size();
        report.gt_segments += v.gt.size();
    }
    for (double tau : cfg.ap_thresholds) {
        bool no_gt = false;
        report.ap.emplace_back(tau, average_precision(videos, tau, &no_gt));
        report.no_gt = report.no_gt || no_gt;
    }
    for (auto cap : cfg.ar_caps) report.ar.emplace_back(cap, average_recall_at_n(videos, cap, cfg.ar_iou_grid));
    return report;
}

std::string report_json(const EvalReport& report) {
    nlohmann::ordered_json ap = nlohmann::ordered_json::object();
    for (const auto& [tau, value] : report.ap) {
        char key[32];
        std::snprintf(key, sizeof key, "%.2f", tau);
        ap[key] = value;
    }
    nlohmann::ordered_json ar = nlohmann::ordered_json::object();
    for (const auto& [cap, value] : report.ar) ar[std::to_string(cap)] = value;
    nlohmann::ordered_json j = {
        {"ap", ap},
        {"ar", ar},
        {"counts", {{"videos", report.videos}, {"proposals", report.proposals}, {"gt_segments", report.gt_segments}}},
        {"warnings", report.no_gt ? nlohmann::ordered_json::array({"no_gt"}) : nlohmann::ordered_json::array()},
    };
    return j.dump(2) + "\n";
}

}  // namespace wafl
