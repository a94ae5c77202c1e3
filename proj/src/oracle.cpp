#include "dre/oracle.hpp"

#include "dre/adapt.hpp"
#include "dre/errors.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <limits>
#include <cmath>
#include <numbers>
#include <sstream>

namespace dre {

namespace {

constexpr Eigen::Index kNodeChunk = 2048;
constexpr double kExpFloor = 1e-12;

std::string node_message(std::string_view what, double x) {
    std::ostringstream msg;
    msg.precision(17);
    msg << what << " at quadrature node x=" << x;
    return msg.str();
}

// Calls fn(offset, H) with H = k(nodes[offset:offset+rows], points) * coeffs for
// consecutive node blocks, so the full node-by-point matrix is never stored.
template <typename Fn>
void for_node_blocks(const OracleContext& ctx, const KernelSpec& kernel, const PointMatrix& points,
                     const Eigen::MatrixXd& coeffs, Fn&& fn) {
    const Eigen::Index total = ctx.rule.nodes.rows();
    for (Eigen::Index start = 0; start < total; start += kNodeChunk) {
        const Eigen::Index rows = std::min(kNodeChunk, total - start);
        const PointMatrix block = ctx.rule.nodes.middleRows(start, rows);
        const Eigen::MatrixXd h = cross_kernel(kernel, block, points) * coeffs;
        fn(start, h);
    }
}

void require_1d(const RatioModel& model) {
    if (model.points.cols() != 1) {
        throw InputError("oracle quantities need a one-dimensional model, got dimension " +
                         std::to_string(model.points.cols()));
    }
}

}  // namespace

void QuadratureSpec::validate() const {
    if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi)) throw InputError("quadrature: need lo < hi");
    if (n_nodes < 3) throw InputError("quadrature: need at least 3 nodes");
    if (scheme == QuadratureScheme::GaussLegendreComposite && n_nodes < 10) {
        throw InputError("quadrature: Gauss-Legendre needs at least one 10-point panel");
    }
}

QuadratureSpec QuadratureSpec::default_for(const GaussianPairSpec& pair) {
    QuadratureSpec spec;
    spec.lo = std::min(pair.mu_p - 8.0 * pair.sigma_p, pair.mu_q - 8.0 * pair.sigma_q);
    spec.hi = std::max(pair.mu_p + 8.0 * pair.sigma_p, pair.mu_q + 8.0 * pair.sigma_q);
    return spec;
}

QuadratureRule make_quadrature(const QuadratureSpec& spec) {
    spec.validate();
    QuadratureRule rule;
    if (spec.scheme == QuadratureScheme::Trapezoid) {
        const auto n = static_cast<Eigen::Index>(spec.n_nodes);
        const double h = (spec.hi - spec.lo) / static_cast<double>(n - 1);
        rule.nodes.resize(n, 1);
        rule.weights = Eigen::VectorXd::Constant(n, h);
        for (Eigen::Index i = 0; i < n; ++i) rule.nodes(i, 0) = spec.lo + h * static_cast<double>(i);
        rule.nodes(n - 1, 0) = spec.hi;
        rule.weights(0) = rule.weights(n - 1) = 0.5 * h;
        return rule;
    }
    using GL = boost::math::quadrature::gauss<double, 10>;
    const auto& abscissa = GL::abscissa();
    const auto& gl_weights = GL::weights();
    std::vector<double> ref_x;
    std::vector<double> ref_w;
    for (std::size_t k = abscissa.size(); k-- > 0;) {
        if (abscissa[k] == 0.0) continue;
        ref_x.push_back(-abscissa[k]);
        ref_w.push_back(gl_weights[k]);
    }
    if (abscissa[0] == 0.0) {
        ref_x.push_back(0.0);
        ref_w.push_back(gl_weights[0]);
    }
    for (std::size_t k = 0; k < abscissa.size(); ++k) {
        if (abscissa[k] == 0.0) continue;
        ref_x.push_back(abscissa[k]);
        ref_w.push_back(gl_weights[k]);
    }
    const std::size_t order = ref_x.size();
    const std::size_t panels = spec.n_nodes / order;
    const double width = (spec.hi - spec.lo) / static_cast<double>(panels);
    const auto n = static_cast<Eigen::Index>(panels * order);
    rule.nodes.resize(n, 1);
    rule.weights.resize(n);
    Eigen::Index idx = 0;
    for (std::size_t p = 0; p < panels; ++p) {
        const double mid = spec.lo + width * (static_cast<double>(p) + 0.5);
        for (std::size_t k = 0; k < order; ++k, ++idx) {
            rule.nodes(idx, 0) = mid + 0.5 * width * ref_x[k];
            rule.weights(idx) = 0.5 * width * ref_w[k];
        }
    }
    return rule;
}

std::vector<double> default_eval_grid(const GaussianPairSpec& pair) {
    constexpr int kPoints = 500;
    const double lo = pair.mu_q - 3.0 * pair.sigma_q;
    const double hi = pair.mu_p + 3.0 * pair.sigma_p;
    std::vector<double> grid(kPoints);
    for (int i = 0; i < kPoints; ++i) grid[i] = lo + (hi - lo) * i / (kPoints - 1);
    grid.back() = hi;
    return grid;
}

OracleContext make_oracle_context(const GaussianPairSpec& pair) {
    return make_oracle_context(pair, QuadratureSpec::default_for(pair), default_eval_grid(pair));
}

OracleContext make_oracle_context(const GaussianPairSpec& pair, const QuadratureSpec& quad,
                                  std::vector<double> eval_grid) {
    pair.validate();
    if (eval_grid.empty()) throw InputError("oracle: evaluation grid is empty");
    if (!std::is_sorted(eval_grid.begin(), eval_grid.end())) throw InputError("oracle: evaluation grid must be sorted");
    OracleContext ctx;
    ctx.pair = pair;
    ctx.quad = quad;
    ctx.eval_grid = std::move(eval_grid);
    ctx.rule = make_quadrature(quad);
    const Eigen::Index n = ctx.rule.weights.size();
    ctx.p.resize(n);
    ctx.q.resize(n);
    ctx.beta.resize(n);
    ctx.log_beta.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double x = ctx.rule.nodes(i, 0);
        ctx.p(i) = gaussian_pdf(x, pair.mu_p, pair.sigma_p);
        ctx.q(i) = gaussian_pdf(x, pair.mu_q, pair.sigma_q);
        ctx.log_beta(i) = log_true_ratio(pair, x);
        ctx.beta(i) = std::exp(ctx.log_beta(i));
    }
    return ctx;
}

double gaussian_pdf(double x, double mu, double sigma) {
    const double z = (x - mu) / sigma;
    return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

double log_true_ratio(const GaussianPairSpec& pair, double x) {
    const double dp = x - pair.mu_p;
    const double dq = x - pair.mu_q;
    return std::log(pair.sigma_q / pair.sigma_p) - dp * dp / (2.0 * pair.sigma_p * pair.sigma_p) +
           dq * dq / (2.0 * pair.sigma_q * pair.sigma_q);
}

double true_ratio(const GaussianPairSpec& pair, double x) { return std::exp(log_true_ratio(pair, x)); }

double bayes_margin(const GaussianPairSpec& pair, LossKind family, double x) {
    // Psi(eta) written in terms of log beta, with eta = beta / (1 + beta); this
    // keeps the tails accurate where eta rounds to 0 or 1.
    const double lb = std::clamp(log_true_ratio(pair, x), -690.0, 690.0);
    switch (family) {
        case LossKind::KuLSIF: return std::exp(lb);
        case LossKind::LR: return lb;
        case LossKind::Exp: return 0.5 * lb;
        case LossKind::SQ: return std::tanh(0.5 * lb);
    }
    throw InputError("bayes_margin: unknown loss");
}

double bayes_margin(const OracleContext& ctx, LossKind family, double x) { return bayes_margin(ctx.pair, family, x); }

Eigen::VectorXd bayes_margins_at_nodes(const OracleContext& ctx, LossKind family) {
    Eigen::VectorXd out(ctx.rule.weights.size());
    for (Eigen::Index i = 0; i < out.size(); ++i) out(i) = bayes_margin(ctx.pair, family, ctx.rule.nodes(i, 0));
    return out;
}

Eigen::VectorXd model_margins_at_nodes(const OracleContext& ctx, const RatioModel& model) {
    require_1d(model);
    return predict_margins(model, ctx.rule.nodes);
}

double population_risk(const OracleContext& ctx, LossKind family, const Eigen::VectorXd& margins) {
    if (margins.size() != ctx.rule.weights.size()) throw InputError("population_risk: one margin per node required");
    double total = 0.0;
    for (Eigen::Index i = 0; i < margins.size(); ++i) {
        const double f = margins(i);
        const double x = ctx.rule.nodes(i, 0);
        if (!std::isfinite(f)) throw NumericalError(node_message("population_risk: non-finite margin", x));
        const double term = loss_derivs(family, 1, f).value * ctx.p(i) + loss_derivs(family, -1, f).value * ctx.q(i);
        if (!std::isfinite(term)) throw NumericalError(node_message("population_risk: non-finite integrand", x));
        total += ctx.rule.weights(i) * term;
    }
    return 0.5 * total;
}

double population_risk(const OracleContext& ctx, LossKind family, const std::function<double(double)>& margin_fn) {
    Eigen::VectorXd margins(ctx.rule.weights.size());
    for (Eigen::Index i = 0; i < margins.size(); ++i) margins(i) = margin_fn(ctx.rule.nodes(i, 0));
    return population_risk(ctx, family, margins);
}

double bregman_error_via_risk(const OracleContext& ctx, LossKind family, const Eigen::VectorXd& margins) {
    return 2.0 * (population_risk(ctx, family, margins) -
                  population_risk(ctx, family, bayes_margins_at_nodes(ctx, family)));
}

double bregman_error_via_risk(const OracleContext& ctx, const RatioModel& model) {
    return bregman_error_via_risk(ctx, model.family, model_margins_at_nodes(ctx, model));
}

BregmanDirect bregman_error_direct(const OracleContext& ctx, LossKind family, const Eigen::VectorXd& margins) {
    if (margins.size() != ctx.rule.weights.size()) throw InputError("bregman_error_direct: one margin per node required");
    BregmanDirect out;
    double total = 0.0;
    for (Eigen::Index i = 0; i < margins.size(); ++i) {
        const double x = ctx.rule.nodes(i, 0);
        const double est = ratio_map_raw(family, margins(i));
        if (family == LossKind::SQ && margins(i) >= 1.0 - kSqClamp) ++out.clamped_nodes;
        if (family == LossKind::Exp && !(est >= kExpFloor)) {
            ++out.excluded_nodes;
            out.excluded_q_mass += ctx.rule.weights(i) * ctx.q(i);
            continue;
        }
        bool in_domain = std::isfinite(est);
        if (family == LossKind::LR) in_domain = in_domain && est > 0.0;
        if (family == LossKind::SQ) in_domain = in_domain && est > -1.0;
        if (!in_domain) throw NumericalError(node_message("bregman_error_direct: ratio estimate outside the generator domain", x));
        const double t = ctx.beta(i);
        const GeneratorValue at_true = bregman_generator(family, t);
        const GeneratorValue at_est = bregman_generator(family, est);
        const double term = at_true.phi - at_est.phi - at_est.dphi * (t - est);
        if (!std::isfinite(term)) throw NumericalError(node_message("bregman_error_direct: non-finite integrand", x));
        total += ctx.rule.weights(i) * term * ctx.q(i);
    }
    out.value = total;
    return out;
}

BregmanDirect bregman_error_direct(const OracleContext& ctx, const RatioModel& model) {
    return bregman_error_direct(ctx, model.family, model_margins_at_nodes(ctx, model));
}

Eigen::VectorXd population_hessian_weights(const OracleContext& ctx, LossKind family, const Eigen::VectorXd& center) {
    if (center.size() != ctx.rule.weights.size()) throw InputError("population Hessian: one center margin per node required");
    Eigen::VectorXd w(center.size());
    for (Eigen::Index i = 0; i < center.size(); ++i) {
        const double c = center(i);
        if (!std::isfinite(c)) throw NumericalError(node_message("population Hessian: non-finite center", ctx.rule.nodes(i, 0)));
        w(i) = ctx.rule.weights(i) * 0.5 *
               (loss_curvature(family, 1, c) * ctx.p(i) + loss_curvature(family, -1, c) * ctx.q(i));
    }
    return w;
}

double population_h_form(const OracleContext& ctx, LossKind family, const Eigen::VectorXd& center, double lambda,
                         const KernelSpec& kernel, const PointMatrix& points, const Eigen::VectorXd& coeffs) {
    if (points.cols() != 1) throw InputError("population_h_form: points must be one-dimensional");
    if (coeffs.size() != points.rows()) throw InputError("population_h_form: one coefficient per point required");
    if (!(lambda >= 0.0)) throw InputError("population_h_form: lambda must be nonnegative");
    if (points.rows() == 0) return 0.0;
    const Eigen::VectorXd w = population_hessian_weights(ctx, family, center);
    double data_term = 0.0;
    for_node_blocks(ctx, kernel, points, coeffs, [&](Eigen::Index start, const Eigen::MatrixXd& h) {
        data_term += w.segment(start, h.rows()).dot(h.col(0).cwiseAbs2());
    });
    const double rkhs = coeffs.dot(gram_matrix(kernel, points) * coeffs);
    return data_term + lambda * rkhs;
}

double grid_mse(const OracleContext& ctx, const RatioModel& model) {
    require_1d(model);
    PointMatrix xs(static_cast<Eigen::Index>(ctx.eval_grid.size()), 1);
    for (std::size_t i = 0; i < ctx.eval_grid.size(); ++i) xs(static_cast<Eigen::Index>(i), 0) = ctx.eval_grid[i];
    const Eigen::VectorXd margins = predict_margins(model, xs);
    double total = 0.0;
    for (std::size_t i = 0; i < ctx.eval_grid.size(); ++i) {
        const double d = ratio_map(model.family, margins(static_cast<Eigen::Index>(i))) - true_ratio(ctx.pair, ctx.eval_grid[i]);
        total += d * d;
    }
    return total / static_cast<double>(ctx.eval_grid.size());
}

RatioModel build_reference_fit(const OracleContext& ctx, LossKind family, const KernelSpec& kernel,
                               const ReferenceFitSpec& spec) {
    const LabeledDataset data = sample_pair(ctx.pair, spec.m, spec.n, spec.seed);
    return fit(family, kernel, data, spec.lambda).model;
}

SandwichReport hessian_sandwich_test(const OracleContext& ctx, LossKind family, const LabeledDataset& data,
                                     double lambda, const RatioModel& reference_center, std::size_t n_directions,
                                     std::uint64_t seed) {
    data.validate();
    if (data.dim() != 1) throw InputError("hessian_sandwich_test: data must be one-dimensional");
    const KernelSpec& kernel = reference_center.kernel;
    const auto N = static_cast<Eigen::Index>(data.size());
    const Eigen::MatrixXd K = gram_matrix(kernel, data.xs);
    const FitResult fitted = fit(family, kernel, data, K, lambda);
    const HessianWeights E = hessian_weights(family, K, fitted.model.alpha, data.ys);

    NormalStream normals(seed);
    Eigen::MatrixXd C(N, static_cast<Eigen::Index>(n_directions));
    for (Eigen::Index j = 0; j < C.cols(); ++j) {
        for (Eigen::Index i = 0; i < N; ++i) C(i, j) = normals.next();
    }

    const Eigen::MatrixXd KC = K * C;
    const Eigen::VectorXd rkhs = C.cwiseProduct(KC).colwise().sum().transpose();
    const Eigen::VectorXd empirical =
        (E.e.asDiagonal() * KC.cwiseAbs2()).colwise().sum().transpose() / static_cast<double>(N) + lambda * rkhs;

    const Eigen::VectorXd w = population_hessian_weights(ctx, family, model_margins_at_nodes(ctx, reference_center));
    Eigen::VectorXd population = lambda * rkhs;
    for_node_blocks(ctx, kernel, data.xs, C, [&](Eigen::Index start, const Eigen::MatrixXd& h) {
        population += (w.segment(start, h.rows()).asDiagonal() * h.cwiseAbs2()).colwise().sum().transpose();
    });

    SandwichReport report;
    report.n_directions = n_directions;
    if (n_directions == 0) return report;
    std::size_t pass = 0;
    report.min_ratio = std::numeric_limits<double>::infinity();
    report.max_ratio = 0.0;
    for (Eigen::Index j = 0; j < C.cols(); ++j) {
        const bool lower = empirical(j) <= 6.0 * population(j);
        const bool upper = 6.0 * population(j) <= 48.0 * empirical(j);
        if (!lower) ++report.lower_failures;
        if (!upper) ++report.upper_failures;
        if (lower && upper) ++pass;
        const double ratio = population(j) / empirical(j);
        report.min_ratio = std::min(report.min_ratio, ratio);
        report.max_ratio = std::max(report.max_ratio, ratio);
    }
    report.fraction_pass = static_cast<double>(pass) / static_cast<double>(n_directions);
    return report;
}

}  // namespace dre
