#include "dre/loss.hpp"

#include "dre/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dre {

namespace {

// exp() arguments are capped here so line-search probes at huge margins give
// large finite values instead of inf.
constexpr double kMaxExponent = 700.0;

double capped_exp(double a) { return std::exp(std::min(a, kMaxExponent)); }

double softplus(double u) {
    return u > 0.0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u));
}

double sigmoid(double u) {
    if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
    const double e = std::exp(u);
    return e / (1.0 + e);
}

void check_label(int y) {
    if (y != 1 && y != -1) throw InputError("label must be +1 or -1, got " + std::to_string(y));
}

void check_probability(double u) {
    if (!(u > 0.0 && u < 1.0)) throw InputError("link: argument must lie in (0,1), got " + std::to_string(u));
}

}  // namespace

std::string to_string(LossKind kind) {
    switch (kind) {
        case LossKind::KuLSIF: return "kulsif";
        case LossKind::LR: return "lr";
        case LossKind::Exp: return "exp";
        case LossKind::SQ: return "sq";
    }
    return "unknown";
}

LossKind parse_loss_kind(std::string_view name) {
    std::string s(name);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "kulsif") return LossKind::KuLSIF;
    if (s == "lr" || s == "logistic") return LossKind::LR;
    if (s == "exp") return LossKind::Exp;
    if (s == "sq" || s == "square") return LossKind::SQ;
    throw InputError("unknown loss '" + std::string(name) + "' (expected kulsif, lr, exp or sq)");
}

MarginDerivatives loss_derivs(LossKind kind, int y, double v) {
    check_label(y);
    const double yd = y;
    switch (kind) {
        case LossKind::KuLSIF:
            if (y == 1) return {-v, -1.0, 0.0, 0.0};
            return {0.5 * v * v, v, 1.0, 0.0};
        case LossKind::LR: {
            // l = softplus(-y v); s = sigma(-y v)
            const double u = -yd * v;
            const double s = sigmoid(u);
            const double s1 = sigmoid(-u);  // 1 - s without cancellation
            const double curv = s * s1;
            return {softplus(u), -yd * s, curv, -yd * curv * (s1 - s)};
        }
        case LossKind::Exp: {
            const double e = capped_exp(-yd * v);
            return {e, -yd * e, e, -yd * e};
        }
        case LossKind::SQ: {
            const double r = 1.0 - yd * v;
            return {r * r, -2.0 * yd * r, 2.0, 0.0};
        }
    }
    return {};
}

double loss_curvature(LossKind kind, int y, double v) {
    switch (kind) {
        case LossKind::KuLSIF:
            check_label(y);
            return y == 1 ? 0.0 : 1.0;
        case LossKind::SQ:
            check_label(y);
            return 2.0;
        default:
            return loss_derivs(kind, y, v).d2;
    }
}

double link(LossKind kind, double u) {
    check_probability(u);
    switch (kind) {
        case LossKind::KuLSIF: return u / (1.0 - u);
        case LossKind::LR: return std::log(u) - std::log1p(-u);
        case LossKind::Exp: return 0.5 * (std::log(u) - std::log1p(-u));
        case LossKind::SQ: return 2.0 * u - 1.0;
    }
    return 0.0;
}

double link_inv(LossKind kind, double v) {
    switch (kind) {
        case LossKind::KuLSIF:
            if (!(v >= 0.0)) throw InputError("link_inv(kulsif): margin must be >= 0, got " + std::to_string(v));
            return v / (1.0 + v);
        case LossKind::LR: return sigmoid(v);
        case LossKind::Exp: return sigmoid(2.0 * v);
        case LossKind::SQ: return std::clamp(0.5 * (v + 1.0), 0.0, 1.0);
    }
    return 0.0;
}

double ratio_map_raw(LossKind kind, double v) {
    switch (kind) {
        case LossKind::KuLSIF: return v;
        case LossKind::LR: return capped_exp(v);
        case LossKind::Exp: return capped_exp(2.0 * v);
        case LossKind::SQ: {
            const double w = std::min(v, 1.0 - kSqClamp);
            return (1.0 + w) / (1.0 - w);
        }
    }
    return 0.0;
}

double ratio_map(LossKind kind, double v) { return std::max(0.0, ratio_map_raw(kind, v)); }

GeneratorValue bregman_generator(LossKind kind, double t) {
    switch (kind) {
        case LossKind::KuLSIF: return {0.5 * (t - 1.0) * (t - 1.0), t - 1.0};
        case LossKind::LR:
            if (t < 0.0) throw InputError("bregman_generator(lr): t must be >= 0");
            if (t == 0.0) return {0.0, -std::numeric_limits<double>::infinity()};
            return {t * std::log(t) - (1.0 + t) * std::log1p(t), std::log(t) - std::log1p(t)};
        case LossKind::Exp:
            if (!(t > 0.0)) throw InputError("bregman_generator(exp): t must be > 0");
            return {-2.0 * std::sqrt(t), -1.0 / std::sqrt(t)};
        case LossKind::SQ:
            if (!(t > -1.0)) throw InputError("bregman_generator(sq): t must be > -1");
            return {4.0 / (1.0 + t), -4.0 / ((1.0 + t) * (1.0 + t))};
    }
    return {};
}

SelfConcordanceReport self_concordance_check(LossKind kind, int y, std::span<const double> v_grid) {
    if (v_grid.empty()) throw InputError("self_concordance_check: empty grid");
    SelfConcordanceReport report;
    bool third_vanishes = true;
    for (double v : v_grid) {
        const auto d = loss_derivs(kind, y, v);
        if (d.d3 != 0.0) third_vanishes = false;
        const double ratio = (d.d3 == 0.0) ? 0.0 : std::abs(d.d3) / d.d2;
        report.max_ratio = std::max(report.max_ratio, ratio);
    }
    if (kind == LossKind::KuLSIF || kind == LossKind::SQ) {
        report.holds = third_vanishes;
    } else {
        report.holds = report.max_ratio <= 1.0 + 1e-9;
    }
    return report;
}

}  // namespace dre
