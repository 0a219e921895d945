#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "wafl/datamodel.hpp"
#include "wafl/loss.hpp"
#include "wafl/model.hpp"
#include "wafl/rng.hpp"

namespace wafl {

struct TrainConfig {
    std::size_t iterations = 25000;
    std::size_t warmup = 2500;
    std::size_t batch_size = 64;
    double lr_max = 8e-4;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    LossKind loss_kind = LossKind::ACA;
    ACAConfig aca;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Position of one token inside a dataset.
struct TokenRef {
    std::uint32_t video = 0;
    std::uint32_t token = 0;

    friend bool operator==(const TokenRef&, const TokenRef&) = default;
};

/// Emits batches with exactly batch_size/2 real and batch_size/2 fake tokens
/// (class judged by the fused label). Each class is drawn from its own
/// shuffled pool; when a pool runs dry it is reshuffled and drawing resumes,
/// so the minority class repeats while the majority class sees each token
/// once per pass.
class BalancedSampler {
public:
    BalancedSampler(const Dataset& dataset, std::size_t batch_size, std::uint64_t seed);

    /// Real tokens first, then fake tokens.
    std::vector<TokenRef> next();

    std::size_t real_count() const noexcept { return real_.tokens.size(); }
    std::size_t fake_count() const noexcept { return fake_.tokens.size(); }

private:
    struct Pool {
        std::vector<TokenRef> tokens;
        std::size_t cursor = 0;
        std::size_t passes = 0;
    };

    void draw(Pool& pool, std::size_t count, std::vector<TokenRef>& out);

    Pool real_;
    Pool fake_;
    std::size_t half_;
    Rng rng_;
};

double lr_at(std::size_t iteration, const TrainConfig& cfg);

/// AdamW moments for one parameter tensor.
struct ParamState {
    std::vector<double> m;
    std::vector<double> v;
};

struct OptimState {
    std::vector<ParamState> params;
    std::size_t step = 0;
};

/// A view of one trainable tensor with its gradient and decay policy.
struct ParamSlot {
    std::span<double> value;
    std::span<const double> grad;
    bool decay = true;
};

/// One decoupled-weight-decay Adam update over all slots.
void optimizer_step(std::span<ParamSlot> slots, OptimState& state, double lr, const TrainConfig& cfg);

struct IterationLog {
    std::size_t it = 0;
    LossReport loss;
    double lr = 0.0;
};

struct TrainResult {
    ModelBundle model;
    std::vector<IterationLog> log;
};

/// Optional per-iteration observer (e.g. to audit sampled batches).
using BatchObserver = std::function<void(std::size_t it, const std::vector<TokenRef>& batch)>;

TrainResult train(const Dataset& dataset, ModelBundle model, const TrainConfig& cfg,
                  const BatchObserver& observer = {});

std::string loss_log_jsonl(const std::vector<IterationLog>& log);

}  // namespace wafl
