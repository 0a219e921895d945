#pragma once

#include <array>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "wafl/datamodel.hpp"

namespace wafl {

struct IntRange {
    std::int64_t min = 0;
    std::int64_t max = 0;

    friend bool operator==(const IntRange&, const IntRange&) = default;
};

/// Seeded generator settings. Fake tokens carry a fixed hidden artifact
/// direction per modality, modulated over time, on top of per-token
/// semantic content that is identical in law for real and fake tokens.
struct SynthConfig {
    std::size_t n_videos = 100;
    /// Extra videos generated from the same artifact directions, split off as a test set.
    std::size_t test_videos = 0;
    IntRange tokens_per_video{5, 50};
    double fake_token_rate = 0.1;
    IntRange run_length{1, 1};
    /// Probabilities over {visual, audio, both}.
    std::array<double, 3> modality_mix{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    std::size_t k_v = 32;
    std::size_t k_a = 32;
    IntRange T_v_raw{5, 20};
    IntRange T_a_raw{10, 40};
    double artifact_amplitude = 1.0;
    double semantic_scale = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Generates `n_videos + test_videos` videos; callers split with split_dataset.
Dataset generate(const SynthConfig& config);

/// Fisher-style ratio |mean_fake - mean_real|^2 / (tr cov_fake + tr cov_real + eps).
/// `vectors` holds one row per token in dataset order; `fake` marks the class of each row.
double separation_statistic(const Tensor& vectors, const std::vector<bool>& fake, double eps = 1e-12);

/// Class membership of every token of `dataset` by fused label, in dataset order.
std::vector<bool> fused_labels(const Dataset& dataset);

/// Pooled (column-mean) raw features per token, visual then audio, after padding.
Tensor raw_pooled_features(const Dataset& dataset, const PadConfig& pad);

}  // namespace wafl
