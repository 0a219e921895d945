#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wafl/datamodel.hpp"
#include "wafl/matrix.hpp"
#include "wafl/rng.hpp"

namespace wafl {

/// Frozen projection plus a trainable low-rank correction:
///   h = W0 x + (alpha / r) * phi_up * phi_down * dropout(x)
struct RealignLayer {
    Tensor w0;        // d x k, frozen
    Tensor phi_up;    // d x r
    Tensor phi_down;  // r x k
    double alpha = 16.0;
    std::size_t rank = 8;
    double dropout_rate = 0.1;

    std::size_t in_dim() const noexcept { return w0.cols(); }
    std::size_t out_dim() const noexcept { return w0.rows(); }
    double scale() const noexcept { return alpha / static_cast<double>(rank); }
};

/// Activations captured by a forward pass for the matching backward pass.
/// One cache belongs to one forward/backward pair and must stay on one thread.
struct RealignCache {
    Tensor dropped;     // dropout(x), T x k
    Tensor keep_scale;  // per-entry dropout multiplier (0 or 1/(1-rate)); empty when no dropout
    Tensor bottleneck;  // dropped * phi_down^T, T x r
    bool valid = false;
};

struct RealignGrads {
    Tensor phi_up;
    Tensor phi_down;
    Tensor input;  // dL/dX; empty unless requested
};

RealignLayer init_realign(std::size_t k, std::size_t d, std::size_t r, double alpha, double dropout_rate,
                          std::uint64_t seed);

Tensor realign_forward(const RealignLayer& layer, const Tensor& x, bool training, Rng& rng,
                       RealignCache* cache = nullptr);

/// Consumes `cache`; a second backward without a new forward raises StaleMask.
RealignGrads realign_backward(const RealignLayer& layer, const Tensor& x, RealignCache& cache,
                              const Tensor& upstream, bool want_input_grad = true);

/// Global average pooling over time (column means).
std::vector<double> pool(const Tensor& h);

struct LinearHead {
    std::vector<double> w;
    double b = 0.0;
};

double sigmoid(double z) noexcept;
double head_logit(const LinearHead& head, std::span<const double> f);
double head_forward(const LinearHead& head, std::span<const double> f);

struct ModelConfig {
    std::size_t k_v = 32;
    std::size_t k_a = 32;
    std::size_t d_v = 32;
    std::size_t d_a = 32;
    std::size_t rank = 8;
    double alpha = 16.0;
    double dropout_rate = 0.1;
    std::uint64_t seed = 0;
    PadConfig pad;

    void validate() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ModelBundle {
    ModelConfig config;
    RealignLayer realign_v;
    RealignLayer realign_a;
    LinearHead head_v;
    LinearHead head_a;
    LinearHead head_va;  // input dim d_v + d_a
};

ModelBundle init_model(const ModelConfig& config);

struct TokenForward {
    double p_v = 0.5;
    double p_a = 0.5;
    double p_av = 0.5;
    std::vector<double> f_v;
    std::vector<double> f_a;
    Tensor x_v;  // padded inputs, kept for the backward pass
    Tensor x_a;
    RealignCache cache_v;
    RealignCache cache_a;

    /// f_v concatenated with f_a.
    std::vector<double> fused() const;
};

/// Pads `features` per the bundle's PadConfig, realigns, pools and scores all three heads.
TokenForward forward_token(const ModelBundle& bundle, const TokenFeatures& features, bool training, Rng& rng);

/// Gradient buffers shaped like the trainable parameters of a bundle.
struct BundleGrads {
    Tensor phi_up_v, phi_down_v, phi_up_a, phi_down_a;
    std::vector<double> w_v, w_a, w_va;
    double b_v = 0.0, b_a = 0.0, b_va = 0.0;

    static BundleGrads zeros_like(const ModelBundle& bundle);
    void scale(double s);
};

/// Accumulates gradients given dL/dlogit for each head into `grads`.
void backward_token(const ModelBundle& bundle, TokenForward& fwd, double dlogit_v, double dlogit_a,
                    double dlogit_av, BundleGrads& grads);

/// Pooled fused feature vector (eval mode) for every token of `dataset`, in dataset order.
Tensor fused_features(const ModelBundle& bundle, const Dataset& dataset);

/// Fused-head scores (eval mode) per video, per token.
std::vector<std::vector<double>> score_dataset(const ModelBundle& bundle, const Dataset& dataset);

// Checkpoints ("WAFLCKP1").

void save_checkpoint(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_checkpoint(const std::filesystem::path& path);

std::string model_config_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace wafl
