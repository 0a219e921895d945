#pragma once

#include <span>
#include <string_view>

namespace wafl {

/// Artifact-centric asymmetric loss settings. Fake tokens (y = 1) keep the
/// full log penalty; real tokens (y = 0) are down-weighted by a high focusing
/// exponent and ignored entirely below the probability margin `mu`.
struct ACAConfig {
    double gamma_plus = 0.0;
    double gamma_minus = 4.0;
    double mu = 0.05;
    double eps = 1e-7;

    void validate() const;
};

enum class LossKind { ACA, Focal, BCE };

LossKind parse_loss_kind(std::string_view text);
std::string_view to_string(LossKind kind) noexcept;

inline constexpr double kFocalGamma = 2.0;

/// max(p - mu, 0)
double margin_shift(double p, double mu) noexcept;

double aca_loss(double p, int y, const ACAConfig& cfg);
double aca_grad(double p, int y, const ACAConfig& cfg);

double bce_loss(double p, int y, double eps = 1e-7);
double bce_grad(double p, int y, double eps = 1e-7);

double focal_loss(double p, int y, double gamma = kFocalGamma, double eps = 1e-7);
double focal_grad(double p, int y, double gamma = kFocalGamma, double eps = 1e-7);

/// Dispatch on kind; Focal uses kFocalGamma and the ACA clamp.
double loss_value(LossKind kind, double p, int y, const ACAConfig& cfg);
double loss_grad(LossKind kind, double p, int y, const ACAConfig& cfg);

struct LossReport {
    double l_v = 0.0;
    double l_a = 0.0;
    double l_va = 0.0;
    double total = 0.0;
};

struct HeadOutputs {
    double p_v, p_a, p_av;
};

struct HeadLabels {
    int y_v, y_a;
    /// Fused label: fake if either modality is fake.
    int y_av() const noexcept { return (y_v == 1 || y_a == 1) ? 1 : 0; }
};

/// Mean loss per head over the batch; total is the sum of the three heads.
LossReport batch_loss(std::span<const HeadOutputs> outputs, std::span<const HeadLabels> labels,
                      const ACAConfig& cfg, LossKind kind);

}  // namespace wafl
