#include <doctest.h>

#include <fstream>
#include <sstream>

#include "support/temp_dir.hpp"
#include "wafl/error.hpp"
#include "wafl/synth.hpp"

using namespace wafl;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

SynthConfig small_config() {
    SynthConfig c;
    c.n_videos = 20;
    c.tokens_per_video = {3, 12};
    c.k_v = 6;
    c.k_a = 4;
    c.seed = 9;
    return c;
}

}  // namespace

TEST_CASE("generation is deterministic per seed") {
    TempDir dir;
    auto cfg = small_config();
    save_dataset(generate(cfg), dir.path() / "a");
    save_dataset(generate(cfg), dir.path() / "b");
    CHECK(slurp(dir.path() / "a" / kManifestFile) == slurp(dir.path() / "b" / kManifestFile));
    CHECK(slurp(dir.path() / "a" / kFeaturesFile) == slurp(dir.path() / "b" / kFeaturesFile));

    cfg.seed = 10;
    save_dataset(generate(cfg), dir.path() / "c");
    CHECK(slurp(dir.path() / "a" / kFeaturesFile) != slurp(dir.path() / "c" / kFeaturesFile));
}

TEST_CASE("generated datasets satisfy the datamodel invariants") {
    auto cfg = small_config();
    cfg.run_length = {1, 3};
    cfg.fake_token_rate = 0.3;
    const auto ds = generate(cfg);
    CHECK_NOTHROW(ds.validate());
    CHECK(ds.k_v() == 6);
    CHECK(ds.k_a() == 4);
    for (const auto& v : ds.videos) {
        for (std::size_t i = 0; i < v.tokens.size(); ++i) {
            const auto& tok = v.tokens[i];
            CHECK(tok.t_s < tok.t_e);
            CHECK(tok.t_e - tok.t_s >= 0.2);
            CHECK(tok.t_e - tok.t_s <= 0.8);
            CHECK(tok.t_e <= v.duration);
            if (i + 1 < v.tokens.size()) CHECK(tok.t_e == v.tokens[i + 1].t_s);
        }
        const auto& feats = ds.features.at(v.id);
        for (const auto& tf : feats) {
            CHECK(tf.visual.rows() >= 5);
            CHECK(tf.visual.rows() <= 20);
            CHECK(tf.audio.rows() >= 10);
            CHECK(tf.audio.rows() <= 40);
        }
    }
}

TEST_CASE("every gt segment is the union of the tokens it labels fake") {
    auto cfg = small_config();
    cfg.n_videos = 60;
    cfg.run_length = {1, 4};
    cfg.fake_token_rate = 0.25;
    const auto ds = generate(cfg);
    std::size_t segments = 0;
    for (const auto& v : ds.videos) {
        for (const auto& seg : v.gt_segments) {
            ++segments;
            double lo = 1e300, hi = -1e300;
            for (const auto& tok : v.tokens) {
                const double ov = std::min(tok.t_e, seg.t_e) - std::max(tok.t_s, seg.t_s);
                if (ov <= 0.0) continue;
                lo = std::min(lo, tok.t_s);
                hi = std::max(hi, tok.t_e);
                if (seg.modality != Modality::Audio) CHECK(tok.label_v == Label::Fake);
                if (seg.modality != Modality::Visual) CHECK(tok.label_a == Label::Fake);
            }
            CHECK(lo == seg.t_s);
            CHECK(hi == seg.t_e);
        }
        // No fake token outside every segment.
        CHECK(label_tokens(v.tokens, v.gt_segments) == v.tokens);
    }
    CHECK(segments > 0);
}

TEST_CASE("observed fake fraction concentrates around the configured rate") {
    SynthConfig cfg;
    cfg.n_videos = 100;
    cfg.fake_token_rate = 0.1;
    cfg.k_v = 4;
    cfg.k_a = 4;
    cfg.seed = 2024;
    const auto ds = generate(cfg);
    const auto labels = fused_labels(ds);
    const double frac = static_cast<double>(std::count(labels.begin(), labels.end(), true)) / labels.size();
    CHECK(frac >= 0.05);
    CHECK(frac <= 0.15);
}

TEST_CASE("zero amplitude makes classes indistinguishable") {
    SynthConfig cfg;
    cfg.n_videos = 120;
    cfg.fake_token_rate = 0.3;
    cfg.artifact_amplitude = 0.0;
    cfg.seed = 77;
    const auto ds = generate(cfg);
    const auto labels = fused_labels(ds);
    REQUIRE(labels.size() >= 2000);
    CHECK(std::count(labels.begin(), labels.end(), true) > 0);
    const double sep = separation_statistic(raw_pooled_features(ds, PadConfig{}), labels);
    CHECK(sep < 0.05);

    cfg.artifact_amplitude = 1.0;
    const auto loud = generate(cfg);
    CHECK(separation_statistic(raw_pooled_features(loud, PadConfig{}), fused_labels(loud)) > sep);
}

TEST_CASE("invalid configs are rejected") {
    auto check_invalid = [](SynthConfig c) {
        try {
            generate(c);
            FAIL("expected InvalidConfig");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::InvalidConfig);
        }
    };
    auto c = small_config();
    c.fake_token_rate = 1.5;
    check_invalid(c);
    c = small_config();
    c.modality_mix = {0.5, 0.5, 0.5};
    check_invalid(c);
    c = small_config();
    c.k_v = 1;
    check_invalid(c);
    c = small_config();
    c.artifact_amplitude = -1.0;
    check_invalid(c);
    c = small_config();
    c.tokens_per_video = {10, 2};
    check_invalid(c);
}

TEST_CASE("separation_statistic closed forms") {
    SUBCASE("identical class distributions") {
        Tensor pts(4, 2, std::vector<double>{1, 2, 3, 4, 1, 2, 3, 4});
        CHECK(separation_statistic(pts, {false, false, true, true}) == doctest::Approx(0.0));
    }
    SUBCASE("offset of norm 10 with tiny spread") {
        // Each class is {m - 0.1 e1, m + 0.1 e1}: trace(cov) = 0.01 per class.
        // Ratio = 10^2 / (0.01 + 0.01) = 5000.
        Tensor pts(4, 2, std::vector<double>{-0.1, 0, 0.1, 0, 6 - 0.1, 8, 6 + 0.1, 8});
        const double s = separation_statistic(pts, {false, false, true, true});
        CHECK(s == doctest::Approx(5000.0).epsilon(1e-9));
        CHECK(s > 100.0);
    }
    SUBCASE("missing class") {
        Tensor pts(2, 2, std::vector<double>{1, 2, 3, 4});
        CHECK_THROWS_AS(separation_statistic(pts, {false, false}), Error);
    }
}
