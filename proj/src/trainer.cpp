#include "wafl/trainer.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "wafl/error.hpp"

namespace wafl {

void TrainConfig::validate() const {
    if (warmup > iterations) throw Error(ErrorCode::InvalidConfig, "warmup must not exceed iterations");
    if (batch_size == 0 || batch_size % 2 != 0) {
        throw Error(ErrorCode::InvalidConfig, "batch_size must be a positive even number");
    }
    if (!(lr_max > 0.0) || !(weight_decay >= 0.0)) {
        throw Error(ErrorCode::InvalidConfig, "lr_max must be > 0 and weight_decay >= 0");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(adam_eps > 0.0)) {
        throw Error(ErrorCode::InvalidConfig, "Adam betas must lie in [0,1) and adam_eps > 0");
    }
    aca.validate();
}

// ---------------------------------------------------------------------------

BalancedSampler::BalancedSampler(const Dataset& dataset, std::size_t batch_size, std::uint64_t seed)
    : half_(batch_size / 2), rng_(seed) {
    if (batch_size == 0 || batch_size % 2 != 0) {
        throw Error(ErrorCode::InvalidConfig, "batch_size must be a positive even number");
    }
    for (std::uint32_t v = 0; v < dataset.videos.size(); ++v) {
        const auto& tokens = dataset.videos[v].tokens;
        for (std::uint32_t t = 0; t < tokens.size(); ++t) {
            (tokens[t].label_av() == Label::Fake ? fake_ : real_).tokens.push_back({v, t});
        }
    }
    if (real_.tokens.empty() || fake_.tokens.empty()) {
        throw Error(ErrorCode::DegenerateDataset,
                    "balanced sampling needs real and fake tokens (have " + std::to_string(real_.tokens.size()) +
                        " real, " + std::to_string(fake_.tokens.size()) + " fake)");
    }
    rng_.shuffle(real_.tokens.begin(), real_.tokens.end());
    rng_.shuffle(fake_.tokens.begin(), fake_.tokens.end());
}

void BalancedSampler::draw(Pool& pool, std::size_t count, std::vector<TokenRef>& out) {
    for (std::size_t i = 0; i < count; ++i) {
        if (pool.cursor == pool.tokens.size()) {
            rng_.shuffle(pool.tokens.begin(), pool.tokens.end());
            pool.cursor = 0;
            ++pool.passes;
        }
        out.push_back(pool.tokens[pool.cursor++]);
    }
}

std::vector<TokenRef> BalancedSampler::next() {
    std::vector<TokenRef> batch;
    batch.reserve(2 * half_);
    draw(real_, half_, batch);
    draw(fake_, half_, batch);
    return batch;
}

// ---------------------------------------------------------------------------

double lr_at(std::size_t iteration, const TrainConfig& cfg) {
    if (iteration < cfg.warmup) {
        return cfg.lr_max * static_cast<double>(iteration + 1) / static_cast<double>(cfg.warmup);
    }
    return cfg.lr_max;
}

void optimizer_step(std::span<ParamSlot> slots, OptimState& state, double lr, const TrainConfig& cfg) {
    if (state.params.size() != slots.size()) {
        state.params.resize(slots.size());
        state.step = 0;
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bias1 = 1.0 - std::pow(cfg.beta1, t);
    const double bias2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t s = 0; s < slots.size(); ++s) {
        auto& slot = slots[s];
        auto& ps = state.params[s];
        if (slot.grad.size() != slot.value.size()) {
            throw Error(ErrorCode::ShapeMismatch, "gradient and parameter sizes differ");
        }
        if (ps.m.size() != slot.value.size()) {
            ps.m.assign(slot.value.size(), 0.0);
            ps.v.assign(slot.value.size(), 0.0);
        }
        const double decay = slot.decay ? cfg.weight_decay : 0.0;
        for (std::size_t i = 0; i < slot.value.size(); ++i) {
            const double g = slot.grad[i];
            ps.m[i] = cfg.beta1 * ps.m[i] + (1.0 - cfg.beta1) * g;
            ps.v[i] = cfg.beta2 * ps.v[i] + (1.0 - cfg.beta2) * g * g;
            const double m_hat = ps.m[i] / bias1;
            const double v_hat = ps.v[i] / bias2;
            slot.value[i] -= lr * (m_hat / (std::sqrt(v_hat) + cfg.adam_eps) + decay * slot.value[i]);
        }
    }
}

// ---------------------------------------------------------------------------

namespace {

void check_dims(const Dataset& dataset, const ModelBundle& model) {
    const auto& c = model.config;
    if (dataset.k_v() != c.k_v || dataset.k_a() != c.k_a) {
        throw Error(ErrorCode::DimensionMismatch,
                    "dataset features are " + std::to_string(dataset.k_v()) + "/" + std::to_string(dataset.k_a()) +
                        " wide, model expects " + std::to_string(c.k_v) + "/" + std::to_string(c.k_a));
    }
}

std::vector<ParamSlot> slots_for(ModelBundle& m, const BundleGrads& g) {
    return {
        {m.realign_v.phi_up.flat(), g.phi_up_v.flat(), true},
        {m.realign_v.phi_down.flat(), g.phi_down_v.flat(), true},
        {m.realign_a.phi_up.flat(), g.phi_up_a.flat(), true},
        {m.realign_a.phi_down.flat(), g.phi_down_a.flat(), true},
        {m.head_v.w, g.w_v, true},
        {std::span<double>(&m.head_v.b, 1), std::span<const double>(&g.b_v, 1), false},
        {m.head_a.w, g.w_a, true},
        {std::span<double>(&m.head_a.b, 1), std::span<const double>(&g.b_a, 1), false},
        {m.head_va.w, g.w_va, true},
        {std::span<double>(&m.head_va.b, 1), std::span<const double>(&g.b_va, 1), false},
    };
}

int as_int(Label l) { return l == Label::Fake ? 1 : 0; }

}  // namespace

TrainResult train(const Dataset& dataset, ModelBundle model, const TrainConfig& cfg, const BatchObserver& observer) {
    cfg.validate();
    dataset.validate();
    check_dims(dataset, model);

    TrainResult result;
    result.log.reserve(cfg.iterations);
    if (cfg.iterations == 0) {
        result.model = std::move(model);
        return result;
    }

    BalancedSampler sampler(dataset, cfg.batch_size, mix_seed(cfg.seed, 1));
    Rng dropout_rng(mix_seed(cfg.seed, 2));
    OptimState state;

    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        const auto batch = sampler.next();
        if (observer) observer(it, batch);

        auto grads = BundleGrads::zeros_like(model);
        std::vector<HeadOutputs> outputs;
        std::vector<HeadLabels> labels;
        outputs.reserve(batch.size());
        labels.reserve(batch.size());
        const double inv_batch = 1.0 / static_cast<double>(batch.size());

        for (const auto& ref : batch) {
            const auto& tok = dataset.videos[ref.video].tokens[ref.token];
            const HeadLabels y{as_int(tok.label_v), as_int(tok.label_a)};
            auto fwd = forward_token(model, dataset.token_features(ref.video, ref.token), true, dropout_rng);
            // dL/dlogit = dL/dp * p(1-p), averaged over the batch.
            auto dlogit = [&](double p, int label) {
                return loss_grad(cfg.loss_kind, p, label, cfg.aca) * p * (1.0 - p) * inv_batch;
            };
            backward_token(model, fwd, dlogit(fwd.p_v, y.y_v), dlogit(fwd.p_a, y.y_a), dlogit(fwd.p_av, y.y_av()),
                           grads);
            outputs.push_back({fwd.p_v, fwd.p_a, fwd.p_av});
            labels.push_back(y);
        }

        const auto report = batch_loss(outputs, labels, cfg.aca, cfg.loss_kind);
        if (!std::isfinite(report.total)) {
            throw Error(ErrorCode::NonFinite, "loss became non-finite at iteration " + std::to_string(it));
        }
        const double lr = lr_at(it, cfg);
        auto slots = slots_for(model, grads);
        optimizer_step(slots, state, lr, cfg);
        result.log.push_back({it, report, lr});
    }
    result.model = std::move(model);
    return result;
}

std::string loss_log_jsonl(const std::vector<IterationLog>& log) {
    std::ostringstream out;
    for (const auto& entry : log) {
        const nlohmann::ordered_json j = {{"it", entry.it},
                                          {"l_v", entry.loss.l_v},
                                          {"l_a", entry.loss.l_a},
                                          {"l_va", entry.loss.l_va},
                                          {"total", entry.loss.total},
                                          {"lr", entry.lr}};
        out << j.dump() << '\n';
    }
    return out.str();
}

}  // namespace wafl
