#include "wafl/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "wafl/model.hpp"
#include "wafl/rng.hpp"

namespace wafl {

namespace {

constexpr double kTolerance = 1e-4;

// Records one comparison. A point fails only if it misses both the relative
// tolerance and an absolute floor sized to finite-difference rounding noise.
void record(GradcheckRow& row, double analytic, double numeric, double floor) {
    const double rel = relative_error(analytic, numeric);
    row.max_rel_error = std::max(row.max_rel_error, rel);
    if (rel >= row.tolerance && std::abs(analytic - numeric) > floor) row.pass = false;
    ++row.points;
}

GradcheckRow check_loss(LossKind kind, const ACAConfig& aca) {
    GradcheckRow row{"loss." + std::string(to_string(kind)), 0, 0.0, kTolerance, true};
    constexpr double h = 1e-6;
    for (int y = 0; y <= 1; ++y) {
        for (int i = 1; i <= 99; ++i) {
            const double p = i / 100.0;
            const bool near_margin = kind == LossKind::ACA && y == 0 && std::abs(p - aca.mu) < 1e-3;
            const bool near_clamp = p < aca.eps + 1e-3 || p > 1.0 - aca.eps - 1e-3;
            if (near_margin || near_clamp) continue;
            const double numeric =
                (loss_value(kind, p + h, y, aca) - loss_value(kind, p - h, y, aca)) / (2.0 * h);
            const double analytic = loss_grad(kind, p, y, aca);
            record(row, analytic, numeric, 1e-9);
        }
    }
    return row;
}

void fill_random(Tensor& t, Rng& rng) {
    for (auto& x : t.flat()) x = rng.normal();
}

// Checks every entry of `param` against a scalar objective by central differences.
void check_tensor(std::span<double> param, std::span<const double> analytic, const std::function<double()>& objective,
                  double h, GradcheckRow& row) {
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double saved = param[i];
        param[i] = saved + h;
        const double plus = objective();
        param[i] = saved - h;
        const double minus = objective();
        param[i] = saved;
        const double numeric = (plus - minus) / (2.0 * h);
        record(row, analytic[i], numeric, 1e-8);
    }
}

GradcheckRow check_realign(const std::string& name, std::size_t k, std::size_t d, std::size_t r, std::uint64_t seed) {
    GradcheckRow row{"realign." + name, 0, 0.0, kTolerance, true};
    Rng rng(seed);
    auto layer = init_realign(k, d, r, 16.0, 0.0, seed);
    fill_random(layer.phi_up, rng);  // away from the zero init so every path is exercised
    Tensor x(7, k), upstream(7, d);
    fill_random(x, rng);
    fill_random(upstream, rng);

    auto objective = [&] {
        Rng unused(0);
        const auto h = realign_forward(layer, x, false, unused);
        double acc = 0.0;
        for (std::size_t i = 0; i < h.size(); ++i) acc += h.flat()[i] * upstream.flat()[i];
        return acc;
    };
    RealignCache cache;
    Rng unused(0);
    realign_forward(layer, x, true, unused, &cache);
    const auto g = realign_backward(layer, x, cache, upstream);

    check_tensor(layer.phi_up.flat(), g.phi_up.flat(), objective, 1e-4, row);
    check_tensor(layer.phi_down.flat(), g.phi_down.flat(), objective, 1e-4, row);
    check_tensor(x.flat(), g.input.flat(), objective, 1e-4, row);
    return row;
}

GradcheckRow check_bundle(LossKind kind, const ACAConfig& aca) {
    GradcheckRow row{"bundle." + std::string(to_string(kind)), 0, 0.0, kTolerance, true};
    ModelConfig cfg;
    cfg.k_v = 5;
    cfg.k_a = 4;
    cfg.d_v = 4;
    cfg.d_a = 3;
    cfg.rank = 2;
    cfg.dropout_rate = 0.0;
    cfg.seed = 7;
    cfg.pad = {6, 5, PadStrategy::Reflection, PadStrategy::Trailing};
    auto bundle = init_model(cfg);
    Rng rng(11);
    for (auto* t : {&bundle.realign_v.phi_up, &bundle.realign_a.phi_up}) {
        for (auto& x : t->flat()) x = 0.2 * rng.normal();
    }
    TokenFeatures tf{FeatureMatrix(4, cfg.k_v), FeatureMatrix(5, cfg.k_a)};
    for (auto& x : tf.visual.flat()) x = static_cast<float>(rng.normal());
    for (auto& x : tf.audio.flat()) x = static_cast<float>(rng.normal());
    // Mixed labels so both branches of every loss are covered.
    const int y_v = 1, y_a = 0, y_av = 1;

    auto objective = [&] {
        Rng unused(0);
        const auto f = forward_token(bundle, tf, false, unused);
        return loss_value(kind, f.p_v, y_v, aca) + loss_value(kind, f.p_a, y_a, aca) +
               loss_value(kind, f.p_av, y_av, aca);
    };

    Rng unused(0);
    auto fwd = forward_token(bundle, tf, true, unused);
    auto dlogit = [&](double p, int y) { return loss_grad(kind, p, y, aca) * p * (1.0 - p); };
    auto grads = BundleGrads::zeros_like(bundle);
    backward_token(bundle, fwd, dlogit(fwd.p_v, y_v), dlogit(fwd.p_a, y_a), dlogit(fwd.p_av, y_av), grads);

    constexpr double h = 1e-5;
    check_tensor(bundle.realign_v.phi_up.flat(), grads.phi_up_v.flat(), objective, h, row);
    check_tensor(bundle.realign_v.phi_down.flat(), grads.phi_down_v.flat(), objective, h, row);
    check_tensor(bundle.realign_a.phi_up.flat(), grads.phi_up_a.flat(), objective, h, row);
    check_tensor(bundle.realign_a.phi_down.flat(), grads.phi_down_a.flat(), objective, h, row);
    check_tensor(bundle.head_v.w, grads.w_v, objective, h, row);
    check_tensor(bundle.head_a.w, grads.w_a, objective, h, row);
    check_tensor(bundle.head_va.w, grads.w_va, objective, h, row);
    check_tensor(std::span<double>(&bundle.head_v.b, 1), std::span<const double>(&grads.b_v, 1), objective, h, row);
    check_tensor(std::span<double>(&bundle.head_a.b, 1), std::span<const double>(&grads.b_a, 1), objective, h, row);
    check_tensor(std::span<double>(&bundle.head_va.b, 1), std::span<const double>(&grads.b_va, 1), objective, h, row);
    return row;
}

}  // namespace

double relative_error(double analytic, double numeric) noexcept {
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    if (scale == 0.0) return 0.0;
    return std::abs(analytic - numeric) / scale;
}

std::vector<GradcheckRow> run_gradcheck(const ACAConfig& aca) {
    std::vector<GradcheckRow> rows;
    for (auto kind : {LossKind::ACA, LossKind::Focal, LossKind::BCE}) rows.push_back(check_loss(kind, aca));
    rows.push_back(check_realign("visual", 6, 5, 2, 1));
    rows.push_back(check_realign("audio", 8, 6, 3, 2));
    for (auto kind : {LossKind::ACA, LossKind::Focal, LossKind::BCE}) rows.push_back(check_bundle(kind, aca));
    return rows;
}

}  // namespace wafl
