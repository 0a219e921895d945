#include <doctest.h>

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "support/fixtures.hpp"
#include "support/oracle.hpp"
#include "wafl/error.hpp"
#include "wafl/eval.hpp"
#include "wafl/rng.hpp"

using namespace wafl;
using wafl::testing::oracle_ap;
using wafl::testing::oracle_ar;

namespace {

VideoProposals single(std::vector<Proposal> props, std::vector<Interval> gt, std::string id = "v") {
    return {std::move(id), std::move(props), std::move(gt)};
}

double ap_of(const std::vector<VideoProposals>& v, double tau) { return average_precision(v, tau); }

// Random instance with coarse scores so ties are common.
std::vector<VideoProposals> random_instance(Rng& rng) {
    std::vector<VideoProposals> out;
    const auto n_videos = rng.uniform_int(1, 4);
    for (std::int64_t v = 0; v < n_videos; ++v) {
        VideoProposals vp;
        vp.video_id = "vid" + std::to_string(rng.uniform_int(0, 999)) + "_" + std::to_string(v);
        const auto n_gt = rng.uniform_int(0, 4);
        for (std::int64_t g = 0; g < n_gt; ++g) {
            const double s = rng.uniform(0.0, 8.0);
            vp.gt.push_back({s, s + rng.uniform(0.2, 2.0)});
        }
        const auto n_p = rng.uniform_int(0, 8);
        for (std::int64_t p = 0; p < n_p; ++p) {
            double s, e;
            if (!vp.gt.empty() && rng.bernoulli(0.6)) {
                const auto& g = vp.gt[rng.uniform_int(0, static_cast<std::int64_t>(vp.gt.size()) - 1)];
                s = g.t_s + rng.uniform(-0.3, 0.3);
                e = g.t_e + rng.uniform(-0.3, 0.3);
                if (e <= s) e = s + 0.1;
            } else {
                s = rng.uniform(0.0, 8.0);
                e = s + rng.uniform(0.2, 2.0);
            }
            vp.proposals.push_back({s, e, std::round(rng.uniform() * 10.0) / 10.0});
        }
        out.push_back(std::move(vp));
    }
    return out;
}

}  // namespace

TEST_CASE("temporal IoU") {
    CHECK(temporal_iou({0, 2}, {1, 3}) == doctest::Approx(1.0 / 3.0));
    CHECK(temporal_iou({0, 1}, {0, 1}) == 1.0);
    CHECK(temporal_iou({0, 1}, {1, 2}) == 0.0);
    CHECK(temporal_iou({0, 1}, {5, 6}) == 0.0);
    CHECK(temporal_iou({0, 4}, {1, 2}) == 0.25);
}

TEST_CASE("AP reference cases") {
    CHECK(ap_of({single({{0, 1, 0.9}}, {{0, 1}})}, 0.5) == 1.0);
    // A confident false alarm ahead of the only hit halves precision.
    CHECK(ap_of({single({{5, 6, 0.9}, {0, 1, 0.4}}, {{0, 1}})}, 0.5) == doctest::Approx(0.5));
    // IoU 0.8 passes 0.75 but not 0.85.
    const std::vector<VideoProposals> partial{single({{0, 0.8, 0.7}}, {{0, 1}})};
    CHECK(ap_of(partial, 0.75) == 1.0);
    CHECK(ap_of(partial, 0.85) == 0.0);
    // Duplicates of one detection count once.
    CHECK(ap_of({single({{0, 1, 0.9}, {0, 1, 0.8}}, {{0, 1}})}, 0.5) == 1.0);
    CHECK(ap_of({single({{0, 1, 0.9}}, {{0, 1}, {3, 4}})}, 0.5) == doctest::Approx(0.5));
}

TEST_CASE("AR reference case") {
    const std::vector<VideoProposals> v{single({{0, 0.8, 0.7}}, {{0, 1}})};
    CHECK(average_recall_at_n(v, 1, EvalConfig::default_ar_grid()) == doctest::Approx(0.7).epsilon(1e-12));
    // The cap hides proposals past the top N.
    const std::vector<VideoProposals> w{single({{5, 6, 0.9}, {0, 1, 0.4}}, {{0, 1}})};
    CHECK(average_recall_at_n(w, 1, EvalConfig::default_ar_grid()) == 0.0);
    CHECK(average_recall_at_n(w, 2, EvalConfig::default_ar_grid()) == 1.0);
}

TEST_CASE("proposal generation") {
    VideoRecord video;
    video.id = "v";
    video.duration = 3.0;
    for (int i = 0; i < 3; ++i) video.tokens.push_back({"w", double(i), double(i + 1)});

    SUBCASE("one proposal per token ranked by score then start") {
        const std::vector<double> scores{0.3, 0.9, 0.9};
        const auto props = generate_proposals(video, scores, EvalConfig{});
        REQUIRE(props.size() == 3);
        CHECK(props[0] == Proposal{1, 2, 0.9});
        CHECK(props[1] == Proposal{2, 3, 0.9});
        CHECK(props[2] == Proposal{0, 1, 0.3});
    }
    SUBCASE("merging fuses above-threshold runs with the run minimum") {
        EvalConfig cfg;
        cfg.merge_adjacent = true;
        const std::vector<double> scores{0.9, 0.8, 0.2};
        const auto props = generate_proposals(video, scores, cfg);
        REQUIRE(props.size() == 2);
        CHECK(props[0] == Proposal{0, 2, 0.8});
        CHECK(props[1] == Proposal{2, 3, 0.2});
    }
    SUBCASE("score count must match") {
        try {
            generate_proposals(video, std::vector<double>{0.5}, EvalConfig{});
            FAIL("expected ScoreCountMismatch");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::ScoreCountMismatch);
        }
    }
}

TEST_CASE("videos without tokens or ground truth") {
    auto ds = testing::labeled_dataset(3, 2);
    VideoRecord empty;
    empty.id = "empty";
    empty.duration = 1.0;
    ds.videos.push_back(empty);
    ds.features[empty.id] = {};
    const auto report = evaluate(ds, {{0.1, 0.2, 0.1, 0.9, 0.8}, {}}, EvalConfig{});
    CHECK(report.videos == 2);
    CHECK(report.gt_segments == 1);
    CHECK_FALSE(report.no_gt);

    const auto real_only = testing::labeled_dataset(3, 0);
    const auto none = evaluate(real_only, {{0.1, 0.2, 0.3}}, EvalConfig{});
    CHECK(none.no_gt);
    for (const auto& [tau, ap] : none.ap) CHECK(ap == 0.0);
    const auto j = nlohmann::json::parse(report_json(none));
    CHECK(j["warnings"][0] == "no_gt");
}

TEST_CASE("report JSON layout") {
    const auto ds = testing::labeled_dataset(3, 2);
    const auto report = evaluate(ds, {{0.0, 0.0, 0.0, 1.0, 1.0}}, EvalConfig{});
    const auto j = nlohmann::ordered_json::parse(report_json(report));
    CHECK(j["ap"].size() == 3);
    // Each token covers half the segment: one hit at 0.5, none at 0.75.
    CHECK(j["ap"]["0.50"] == 1.0);
    CHECK(j["ap"]["0.75"] == 0.0);
    CHECK(j["ar"].contains("100"));
    CHECK(j["ar"].contains("5"));
    CHECK(j["counts"]["proposals"] == 5);
    CHECK(j["warnings"].empty());

    EvalConfig merged;
    merged.merge_adjacent = true;
    const auto mj = nlohmann::json::parse(report_json(evaluate(ds, {{0.0, 0.0, 0.0, 1.0, 1.0}}, merged)));
    CHECK(mj["ap"]["0.95"] == 1.0);
}

TEST_CASE("AP and AR agree with the reference implementation on random instances") {
    Rng rng(1234);
    const auto grid = EvalConfig::default_ar_grid();
    for (int trial = 0; trial < 1000; ++trial) {
        const auto inst = random_instance(rng);
        for (double tau : {0.3, 0.5, 0.75, 0.95}) {
            const double ap = ap_of(inst, tau);
            CHECK(std::abs(ap - oracle_ap(inst, tau)) <= 1e-9);
            CHECK(ap >= 0.0);
            CHECK(ap <= 1.0);
        }
        double prev = 0.0;
        for (std::size_t cap : {1u, 2u, 5u, 10u, 20u}) {
            const double ar = average_recall_at_n(inst, cap, grid);
            CHECK(std::abs(ar - oracle_ar(inst, cap, grid)) <= 1e-9);
            CHECK(ar >= prev);
            prev = ar;
        }
    }
}

TEST_CASE("AP depends only on score ranks and not on input order") {
    Rng rng(99);
    for (int trial = 0; trial < 300; ++trial) {
        auto inst = random_instance(rng);
        const double base = ap_of(inst, 0.5);

        auto transformed = inst;
        for (auto& v : transformed) {
            for (auto& p : v.proposals) p.score = std::exp(3.0 * p.score) - 7.0;
        }
        CHECK(ap_of(transformed, 0.5) == doctest::Approx(base).epsilon(1e-12));

        auto shuffled = inst;
        rng.shuffle(shuffled.begin(), shuffled.end());
        for (auto& v : shuffled) rng.shuffle(v.proposals.begin(), v.proposals.end());
        CHECK(ap_of(shuffled, 0.5) == doctest::Approx(base).epsilon(1e-12));
    }
}

TEST_CASE("uniform scores across three videos") {
    std::vector<VideoProposals> inst{
        single({{0, 1, 0.5}, {1, 2, 0.5}, {2, 3, 0.5}}, {{1, 2}}, "a"),
        single({{0, 1, 0.5}, {1, 2, 0.5}}, {{0, 1}}, "b"),
        single({{0, 1, 0.5}, {1, 2, 0.5}, {2, 3, 0.5}, {3, 4, 0.5}}, {{2, 4}}, "c"),
    };
    for (double tau : {0.5, 0.75}) CHECK(ap_of(inst, tau) == doctest::Approx(oracle_ap(inst, tau)).epsilon(1e-12));
    // Ties break by start time, then video id: a0 b0 c0 a1 b1 c1 a2 c2 c3.
    // Hits at ranks 2 (b0), 4 (a1) and 8 (c2, IoU exactly 0.5).
    CHECK(ap_of(inst, 0.5) == doctest::Approx((1.0 / 2.0 + 2.0 / 4.0 + 3.0 / 8.0) / 3.0));
    CHECK(ap_of(inst, 0.75) == doctest::Approx((1.0 / 2.0 + 2.0 / 4.0) / 3.0));
}
