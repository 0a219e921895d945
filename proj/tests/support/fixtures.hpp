#pragma once

#include <string>

#include "wafl/datamodel.hpp"
#include "wafl/rng.hpp"

namespace wafl::testing {

// One video holding `n_real` real tokens followed by `n_fake` visually fake
// tokens, with random features of width k.
inline Dataset labeled_dataset(std::size_t n_real, std::size_t n_fake, std::size_t k = 3, std::uint64_t seed = 0) {
    Rng rng(seed);
    VideoRecord v;
    v.id = "v0";
    std::vector<TokenFeatures> feats;
    for (std::size_t i = 0; i < n_real + n_fake; ++i) {
        WordToken tok;
        tok.word = "w" + std::to_string(i);
        tok.t_s = static_cast<double>(i);
        tok.t_e = static_cast<double>(i + 1);
        if (i >= n_real) tok.label_v = Label::Fake;
        v.tokens.push_back(tok);
        TokenFeatures tf{FeatureMatrix(3, k), FeatureMatrix(4, k)};
        for (auto& x : tf.visual.flat()) x = static_cast<float>(rng.normal());
        for (auto& x : tf.audio.flat()) x = static_cast<float>(rng.normal());
        feats.push_back(std::move(tf));
    }
    v.duration = static_cast<double>(n_real + n_fake);
    if (n_fake > 0) v.gt_segments.push_back({static_cast<double>(n_real), v.duration, Modality::Visual});
    FeatureStore store;
    store[v.id] = std::move(feats);
    return make_dataset({v}, std::move(store));
}

}  // namespace wafl::testing
