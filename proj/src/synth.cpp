#include "wafl/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>

#include "wafl/error.hpp"
#include "wafl/rng.hpp"

namespace wafl {

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::InvalidConfig, what);
}

std::vector<double> unit_direction(Rng& rng, std::size_t dim) {
    std::vector<double> u(dim);
    double norm2 = 0.0;
    do {
        for (auto& x : u) x = rng.normal();
        norm2 = std::inner_product(u.begin(), u.end(), u.begin(), 0.0);
    } while (norm2 < 1e-12);
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& x : u) x *= inv;
    return u;
}

Modality sample_modality(Rng& rng, const std::array<double, 3>& mix) {
    const double x = rng.uniform();
    if (x < mix[0]) return Modality::Visual;
    if (x < mix[0] + mix[1]) return Modality::Audio;
    return Modality::Both;
}

FeatureMatrix token_rows(Rng& rng, std::size_t T, std::size_t k, double semantic_scale,
                         const std::vector<double>* artifact, double amplitude) {
    std::vector<double> centroid(k);
    for (auto& c : centroid) c = rng.normal(0.0, semantic_scale);
    FeatureMatrix rows(T, k);
    for (std::size_t t = 0; t < T; ++t) {
        const double mod = 1.0 + 0.5 * std::sin(2.0 * std::numbers::pi * 3.0 * static_cast<double>(t) /
                                                 static_cast<double>(T));
        for (std::size_t j = 0; j < k; ++j) {
            double x = centroid[j] + rng.normal(0.0, 0.5);
            if (artifact != nullptr) x += amplitude * (*artifact)[j] * mod;
            rows(t, j) = static_cast<float>(x);
        }
    }
    return rows;
}

}  // namespace

void SynthConfig::validate() const {
    require(tokens_per_video.min >= 0 && tokens_per_video.min <= tokens_per_video.max,
            "tokens_per_video must satisfy 0 <= min <= max");
    require(fake_token_rate >= 0.0 && fake_token_rate <= 1.0, "fake_token_rate must lie in [0,1]");
    require(run_length.min >= 1 && run_length.min <= run_length.max, "run_length must satisfy 1 <= min <= max");
    double mix_sum = 0.0;
    for (double p : modality_mix) {
        require(p >= 0.0 && p <= 1.0, "modality_mix entries must lie in [0,1]");
        mix_sum += p;
    }
    require(std::abs(mix_sum - 1.0) < 1e-9, "modality_mix must sum to 1");
    require(k_v >= 2 && k_a >= 2, "feature dims must be >= 2");
    require(T_v_raw.min >= 1 && T_v_raw.min <= T_v_raw.max, "T_v_raw must satisfy 1 <= min <= max");
    require(T_a_raw.min >= 1 && T_a_raw.min <= T_a_raw.max, "T_a_raw must satisfy 1 <= min <= max");
    require(std::isfinite(artifact_amplitude) && artifact_amplitude >= 0.0, "artifact_amplitude must be >= 0");
    require(std::isfinite(semantic_scale) && semantic_scale > 0.0, "semantic_scale must be > 0");
}

Dataset generate(const SynthConfig& config) {
    config.validate();

    Rng global(mix_seed(config.seed, 0));
    const auto u_v = unit_direction(global, config.k_v);
    const auto u_a = unit_direction(global, config.k_a);

    const double mean_run = 0.5 * static_cast<double>(config.run_length.min + config.run_length.max);
    const double rate = config.fake_token_rate;
    // Start probability making the long-run fake fraction equal `rate` for a
    // renewal process of single real tokens and runs of mean length mean_run.
    const double start_prob = rate >= 1.0 ? 1.0 : rate / (rate + mean_run * (1.0 - rate));

    Dataset ds;
    const std::size_t total = config.n_videos + config.test_videos;
    ds.videos.reserve(total);
    for (std::size_t v = 0; v < total; ++v) {
        Rng rng(mix_seed(config.seed, v + 1));
        char id[32];
        std::snprintf(id, sizeof id, "vid_%05zu", v);

        const auto n_tokens = static_cast<std::size_t>(
            rng.uniform_int(config.tokens_per_video.min, config.tokens_per_video.max));
        VideoRecord rec;
        rec.id = id;
        double t = 0.0;
        for (std::size_t i = 0; i < n_tokens; ++i) {
            const double dur = rng.uniform(0.2, 0.8);
            rec.tokens.push_back(WordToken{"w" + std::to_string(i), t, t + dur, Label::Real, Label::Real});
            t += dur;
        }
        rec.duration = n_tokens > 0 ? t : 1.0;

        for (std::size_t i = 0; i < n_tokens;) {
            if (!rng.bernoulli(start_prob)) {
                ++i;
                continue;
            }
            const auto len = static_cast<std::size_t>(rng.uniform_int(config.run_length.min, config.run_length.max));
            const std::size_t last = std::min(n_tokens, i + len) - 1;
            rec.gt_segments.push_back(
                ForgerySegment{rec.tokens[i].t_s, rec.tokens[last].t_e, sample_modality(rng, config.modality_mix)});
            i = last + 1;
        }
        rec.tokens = label_tokens(std::move(rec.tokens), rec.gt_segments);

        std::vector<TokenFeatures> feats;
        feats.reserve(n_tokens);
        for (const auto& tok : rec.tokens) {
            const auto T_v = static_cast<std::size_t>(rng.uniform_int(config.T_v_raw.min, config.T_v_raw.max));
            const auto T_a = static_cast<std::size_t>(rng.uniform_int(config.T_a_raw.min, config.T_a_raw.max));
            TokenFeatures tf;
            tf.visual = token_rows(rng, T_v, config.k_v, config.semantic_scale,
                                   tok.label_v == Label::Fake ? &u_v : nullptr, config.artifact_amplitude);
            tf.audio = token_rows(rng, T_a, config.k_a, config.semantic_scale,
                                  tok.label_a == Label::Fake ? &u_a : nullptr, config.artifact_amplitude);
            feats.push_back(std::move(tf));
        }
        ds.features.emplace(rec.id, std::move(feats));
        ds.videos.push_back(std::move(rec));
    }
    return ds;
}

double separation_statistic(const Tensor& vectors, const std::vector<bool>& fake, double eps) {
    if (vectors.rows() != fake.size()) {
        throw Error(ErrorCode::ShapeMismatch, "one class flag per vector required");
    }
    const std::size_t dim = vectors.cols();
    std::vector<double> mean_f(dim, 0.0), mean_r(dim, 0.0);
    std::size_t n_f = 0, n_r = 0;
    for (std::size_t i = 0; i < vectors.rows(); ++i) {
        auto& mean = fake[i] ? mean_f : mean_r;
        (fake[i] ? n_f : n_r)++;
        const auto row = vectors.row(i);
        for (std::size_t j = 0; j < dim; ++j) mean[j] += row[j];
    }
    if (n_f == 0 || n_r == 0) throw Error(ErrorCode::DegenerateClass, "both classes must be non-empty");
    for (std::size_t j = 0; j < dim; ++j) {
        mean_f[j] /= static_cast<double>(n_f);
        mean_r[j] /= static_cast<double>(n_r);
    }
    double tr_f = 0.0, tr_r = 0.0;
    for (std::size_t i = 0; i < vectors.rows(); ++i) {
        const auto& mean = fake[i] ? mean_f : mean_r;
        double& tr = fake[i] ? tr_f : tr_r;
        const auto row = vectors.row(i);
        for (std::size_t j = 0; j < dim; ++j) tr += (row[j] - mean[j]) * (row[j] - mean[j]);
    }
    tr_f /= static_cast<double>(n_f);
    tr_r /= static_cast<double>(n_r);
    double gap = 0.0;
    for (std::size_t j = 0; j < dim; ++j) gap += (mean_f[j] - mean_r[j]) * (mean_f[j] - mean_r[j]);
    return gap / (tr_f + tr_r + eps);
}

std::vector<bool> fused_labels(const Dataset& dataset) {
    std::vector<bool> out;
    out.reserve(dataset.token_count());
    for (const auto& v : dataset.videos) {
        for (const auto& tok : v.tokens) out.push_back(tok.label_av() == Label::Fake);
    }
    return out;
}

Tensor raw_pooled_features(const Dataset& dataset, const PadConfig& pad) {
    const std::size_t kv = dataset.k_v(), ka = dataset.k_a();
    Tensor out(dataset.token_count(), kv + ka);
    std::size_t r = 0;
    for (std::size_t v = 0; v < dataset.videos.size(); ++v) {
        for (std::size_t t = 0; t < dataset.videos[v].tokens.size(); ++t, ++r) {
            const auto padded = pad_token(dataset.token_features(v, t), pad);
            auto row = out.row(r);
            for (std::size_t i = 0; i < padded.visual.rows(); ++i) {
                for (std::size_t j = 0; j < kv; ++j) row[j] += padded.visual(i, j);
            }
            for (std::size_t j = 0; j < kv; ++j) row[j] /= static_cast<double>(padded.visual.rows());
            for (std::size_t i = 0; i < padded.audio.rows(); ++i) {
                for (std::size_t j = 0; j < ka; ++j) row[kv + j] += padded.audio(i, j);
            }
            for (std::size_t j = 0; j < ka; ++j) row[kv + j] /= static_cast<double>(padded.audio.rows());
        }
    }
    return out;
}

}  // namespace wafl
