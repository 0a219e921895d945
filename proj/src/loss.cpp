#include "wafl/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "wafl/error.hpp"

namespace wafl {

namespace {

void check_inputs(double p, int y) {
    if (!std::isfinite(p)) throw Error(ErrorCode::NonFinite, "probability is not finite");
    if (y != 0 && y != 1) throw Error(ErrorCode::InvalidLabel, "label must be 0 or 1, got " + std::to_string(y));
}

// Value and slope of the clamp; slope is zero where the clamp is active.
struct Clamped {
    double p;
    double slope;
};

Clamped clamp_prob(double p, double eps) {
    if (p < eps) return {eps, 0.0};
    if (p > 1.0 - eps) return {1.0 - eps, 0.0};
    return {p, 1.0};
}

// -(1-q)^g log(q) and its derivative in q.
double pos_term(double q, double g) { return -std::pow(1.0 - q, g) * std::log(q); }

double pos_term_grad(double q, double g) {
    const double focus = g == 0.0 ? 0.0 : g * std::pow(1.0 - q, g - 1.0) * std::log(q);
    return focus - std::pow(1.0 - q, g) / q;
}

// -q^g log(1-q) and its derivative in q.
double neg_term(double q, double g) {
    if (q <= 0.0) return 0.0;
    return -std::pow(q, g) * std::log1p(-q);
}

double neg_term_grad(double q, double g) {
    if (q <= 0.0) return 0.0;
    const double focus = g == 0.0 ? 0.0 : -g * std::pow(q, g - 1.0) * std::log1p(-q);
    return focus + std::pow(q, g) / (1.0 - q);
}

}  // namespace

void ACAConfig::validate() const {
    if (!(gamma_plus >= 0.0) || !(gamma_minus >= 0.0)) {
        throw Error(ErrorCode::InvalidConfig, "ACA exponents must be nonnegative");
    }
    if (!(mu >= 0.0 && mu < 1.0)) throw Error(ErrorCode::InvalidConfig, "ACA margin must lie in [0, 1)");
    if (!(eps > 0.0 && eps <= 1e-3)) throw Error(ErrorCode::InvalidConfig, "ACA clamp must lie in (0, 1e-3]");
}

LossKind parse_loss_kind(std::string_view text) {
    if (text == "aca") return LossKind::ACA;
    if (text == "focal") return LossKind::Focal;
    if (text == "bce") return LossKind::BCE;
    throw Error(ErrorCode::InvalidConfig, "unknown loss kind '" + std::string(text) + "'");
}

std::string_view to_string(LossKind kind) noexcept {
    switch (kind) {
        case LossKind::ACA: return "aca";
        case LossKind::Focal: return "focal";
        case LossKind::BCE: return "bce";
    }
    return "aca";
}

double margin_shift(double p, double mu) noexcept { return std::max(p - mu, 0.0); }

double aca_loss(double p, int y, const ACAConfig& cfg) {
    check_inputs(p, y);
    const auto c = clamp_prob(p, cfg.eps);
    if (y == 1) return pos_term(c.p, cfg.gamma_plus);
    return neg_term(margin_shift(c.p, cfg.mu), cfg.gamma_minus);
}

double aca_grad(double p, int y, const ACAConfig& cfg) {
    check_inputs(p, y);
    const auto c = clamp_prob(p, cfg.eps);
    if (c.slope == 0.0) return 0.0;
    if (y == 1) return pos_term_grad(c.p, cfg.gamma_plus);
    // d p_m / d p is 1 above the margin and 0 below it.
    return neg_term_grad(margin_shift(c.p, cfg.mu), cfg.gamma_minus);
}

double bce_loss(double p, int y, double eps) { return focal_loss(p, y, 0.0, eps); }

double bce_grad(double p, int y, double eps) { return focal_grad(p, y, 0.0, eps); }

double focal_loss(double p, int y, double gamma, double eps) {
    check_inputs(p, y);
    const auto c = clamp_prob(p, eps);
    return y == 1 ? pos_term(c.p, gamma) : neg_term(c.p, gamma);
}

double focal_grad(double p, int y, double gamma, double eps) {
    check_inputs(p, y);
    const auto c = clamp_prob(p, eps);
    if (c.slope == 0.0) return 0.0;
    return y == 1 ? pos_term_grad(c.p, gamma) : neg_term_grad(c.p, gamma);
}

double loss_value(LossKind kind, double p, int y, const ACAConfig& cfg) {
    switch (kind) {
        case LossKind::ACA: return aca_loss(p, y, cfg);
        case LossKind::Focal: return focal_loss(p, y, kFocalGamma, cfg.eps);
        case LossKind::BCE: return bce_loss(p, y, cfg.eps);
    }
    return 0.0;
}

double loss_grad(LossKind kind, double p, int y, const ACAConfig& cfg) {
    switch (kind) {
        case LossKind::ACA: return aca_grad(p, y, cfg);
        case LossKind::Focal: return focal_grad(p, y, kFocalGamma, cfg.eps);
        case LossKind::BCE: return bce_grad(p, y, cfg.eps);
    }
    return 0.0;
}

LossReport batch_loss(std::span<const HeadOutputs> outputs, std::span<const HeadLabels> labels,
                      const ACAConfig& cfg, LossKind kind) {
    if (outputs.size() != labels.size()) {
        throw Error(ErrorCode::ShapeMismatch, "one label set per output required");
    }
    LossReport r;
    if (outputs.empty()) return r;
    for (std::size_t i = 0; i < outputs.size(); ++i) {
        r.l_v += loss_value(kind, outputs[i].p_v, labels[i].y_v, cfg);
        r.l_a += loss_value(kind, outputs[i].p_a, labels[i].y_a, cfg);
        r.l_va += loss_value(kind, outputs[i].p_av, labels[i].y_av(), cfg);
    }
    const double inv = 1.0 / static_cast<double>(outputs.size());
    r.l_v *= inv;
    r.l_a *= inv;
    r.l_va *= inv;
    r.total = r.l_v + r.l_a + r.l_va;
    return r;
}

}  // namespace wafl
