#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wafl/datamodel.hpp"

namespace wafl {

struct Interval {
    double t_s = 0.0;
    double t_e = 0.0;
};

struct Proposal {
    double t_s = 0.0;
    double t_e = 0.0;
    double score = 0.0;

    friend bool operator==(const Proposal&, const Proposal&) = default;
};

struct EvalConfig {
    std::vector<double> ap_thresholds{0.5, 0.75, 0.95};
    std::vector<std::size_t> ar_caps{100, 50, 20, 10, 5, 2};
    /// 0.50, 0.55, ..., 0.95 computed as i/20 so grid points are the nearest doubles.
    std::vector<double> ar_iou_grid = default_ar_grid();
    bool merge_adjacent = false;
    double merge_score_threshold = 0.5;

    static std::vector<double> default_ar_grid();
    void validate() const;
};

/// One video's ranked proposals with its ground truth.
struct VideoProposals {
    std::string video_id;
    std::vector<Proposal> proposals;
    std::vector<Interval> gt;
};

struct EvalReport {
    std::vector<std::pair<double, double>> ap;       // threshold -> AP
    std::vector<std::pair<std::size_t, double>> ar;  // cap -> AR
    std::size_t videos = 0;
    std::size_t proposals = 0;
    std::size_t gt_segments = 0;
    /// Set when there is no ground truth at all; AP is then reported as 0.
    bool no_gt = false;
};

/// Ranking order: higher score first, then earlier start.
bool ranks_before(const Proposal& a, const Proposal& b) noexcept;

/// One proposal per token (or per above-threshold run when merging), sorted by rank.
std::vector<Proposal> generate_proposals(const VideoRecord& video, std::span<const double> scores,
                                         const EvalConfig& cfg);

double temporal_iou(Interval a, Interval b) noexcept;

/// All-point interpolated AP of proposals pooled across videos at IoU threshold `tau`.
double average_precision(std::span<const VideoProposals> videos, double tau, bool* no_gt = nullptr);

/// Recall of the top-`cap` proposals per video, averaged over `iou_grid`.
double average_recall_at_n(std::span<const VideoProposals> videos, std::size_t cap,
                           std::span<const double> iou_grid);

/// Proposal generation plus every configured AP and AR metric.
EvalReport evaluate(const Dataset& dataset, const std::vector<std::vector<double>>& scores, const EvalConfig& cfg);

std::vector<VideoProposals> build_video_proposals(const Dataset& dataset,
                                                  const std::vector<std::vector<double>>& scores,
                                                  const EvalConfig& cfg);

std::string report_json(const EvalReport& report);

}  // namespace wafl
