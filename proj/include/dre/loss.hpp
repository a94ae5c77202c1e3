#pragma once

#include <span>
#include <string>
#include <string_view>

namespace dre {

/// The four proper composite losses. Each one induces a Bregman divergence on
/// density ratios through its Bayes risk.
enum class LossKind { KuLSIF, LR, Exp, SQ };

[[nodiscard]] std::string to_string(LossKind kind);
[[nodiscard]] LossKind parse_loss_kind(std::string_view name);

/// Loss value and its first three derivatives in the margin v.
struct MarginDerivatives {
    double value = 0.0;
    double d1 = 0.0;
    double d2 = 0.0;
    double d3 = 0.0;
};

/// v <= 1 - kSqClamp before the SQ ratio map is applied (pole at v = 1).
inline constexpr double kSqClamp = 1e-8;

/// Labels are +1 (sample from P) and -1 (sample from Q). Throws InputError otherwise.
[[nodiscard]] MarginDerivatives loss_derivs(LossKind kind, int y, double v);

/// Convenience: the second derivative alone, used for Hessian weights.
[[nodiscard]] double loss_curvature(LossKind kind, int y, double v);

/// Link Psi: posterior probability u in (0,1) -> margin.
[[nodiscard]] double link(LossKind kind, double u);
/// Inverse link: margin -> posterior probability.
[[nodiscard]] double link_inv(LossKind kind, double v);

/// g(v) = Psi^{-1}(v) / (1 - Psi^{-1}(v)) in closed form, floored at 0.
[[nodiscard]] double ratio_map(LossKind kind, double v);
/// Same as ratio_map but without the floor at 0 (the SQ pole clamp still applies).
[[nodiscard]] double ratio_map_raw(LossKind kind, double v);

/// Pointwise Bregman generator phi and its derivative. The generator is
/// phi(t) = -(1+t) G(t/(1+t)) with G the Bayes risk of the loss, up to affine
/// terms that do not change the divergence.
struct GeneratorValue {
    double phi = 0.0;
    double dphi = 0.0;
};
[[nodiscard]] GeneratorValue bregman_generator(LossKind kind, double t);

struct SelfConcordanceReport {
    double max_ratio = 0.0;
    bool holds = false;
};

/// Max of |l'''| / l'' over the grid (0/0 counts as 0). LR and Exp must stay
/// below 1 + 1e-9; KuLSIF and SQ must have l''' identically zero.
[[nodiscard]] SelfConcordanceReport self_concordance_check(LossKind kind, int y,
                                                           std::span<const double> v_grid);

}  // namespace dre
