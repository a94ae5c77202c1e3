#pragma once

#include "dre/data.hpp"
#include "dre/loss.hpp"
#include "dre/solver.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace dre {

enum class QuadratureScheme { Trapezoid, GaussLegendreComposite };

/// 1-D quadrature on [lo, hi]. For the Gauss-Legendre scheme n_nodes is
/// rounded down to a whole number of 10-point panels.
struct QuadratureSpec {
    double lo = -1.0;
    double hi = 1.0;
    std::size_t n_nodes = 20001;
    QuadratureScheme scheme = QuadratureScheme::Trapezoid;

    void validate() const;
    /// Trapezoid with 20001 nodes on [min(mu - 8 sigma), max(mu + 8 sigma)] over both densities.
    [[nodiscard]] static QuadratureSpec default_for(const GaussianPairSpec& pair);
};

struct QuadratureRule {
    PointMatrix nodes;  ///< n x 1
    Eigen::VectorXd weights;
};

[[nodiscard]] QuadratureRule make_quadrature(const QuadratureSpec& spec);

/// 500 equispaced points on [mu_q - 3 sigma_q, mu_p + 3 sigma_p].
[[nodiscard]] std::vector<double> default_eval_grid(const GaussianPairSpec& pair);

/// Immutable ground-truth context. Densities and the true ratio are tabulated
/// at the quadrature nodes on construction.
struct OracleContext {
    GaussianPairSpec pair;
    QuadratureSpec quad;
    std::vector<double> eval_grid;

    QuadratureRule rule;
    Eigen::VectorXd p;           ///< p(x) at nodes
    Eigen::VectorXd q;           ///< q(x) at nodes
    Eigen::VectorXd beta;        ///< true ratio at nodes
    Eigen::VectorXd log_beta;

    [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(rule.weights.size()); }
};

[[nodiscard]] OracleContext make_oracle_context(const GaussianPairSpec& pair);
[[nodiscard]] OracleContext make_oracle_context(const GaussianPairSpec& pair, const QuadratureSpec& quad,
                                                std::vector<double> eval_grid);

[[nodiscard]] double gaussian_pdf(double x, double mu, double sigma);
[[nodiscard]] double log_true_ratio(const GaussianPairSpec& pair, double x);
[[nodiscard]] double true_ratio(const GaussianPairSpec& pair, double x);

/// Margin of the Bayes classifier: the link applied to p / (p + q).
[[nodiscard]] double bayes_margin(const GaussianPairSpec& pair, LossKind family, double x);
[[nodiscard]] double bayes_margin(const OracleContext& ctx, LossKind family, double x);
[[nodiscard]] Eigen::VectorXd bayes_margins_at_nodes(const OracleContext& ctx, LossKind family);

/// Margins of a one-dimensional model at the quadrature nodes.
[[nodiscard]] Eigen::VectorXd model_margins_at_nodes(const OracleContext& ctx, const RatioModel& model);

/// 1/2 int l(1, f) p + 1/2 int l(-1, f) q, with f given by its values at the nodes.
[[nodiscard]] double population_risk(const OracleContext& ctx, LossKind family, const Eigen::VectorXd& margins);
[[nodiscard]] double population_risk(const OracleContext& ctx, LossKind family,
                                     const std::function<double(double)>& margin_fn);

/// Twice the excess risk of a model over the Bayes margin.
[[nodiscard]] double bregman_error_via_risk(const OracleContext& ctx, LossKind family, const Eigen::VectorXd& margins);
[[nodiscard]] double bregman_error_via_risk(const OracleContext& ctx, const RatioModel& model);

struct BregmanDirect {
    double value = 0.0;
    std::size_t excluded_nodes = 0;
    double excluded_q_mass = 0.0;  ///< Exp only: q-mass of nodes where the estimate is below 1e-12
    /// SQ only: nodes whose margin is at or beyond the pole of the ratio map and
    /// was clamped; the risk identity does not hold there.
    std::size_t clamped_nodes = 0;
};

/// int [phi(beta) - phi(b) - phi'(b)(beta - b)] q with b the model's ratio estimate
/// (unfloored) and phi the family's Bregman generator.
[[nodiscard]] BregmanDirect bregman_error_direct(const OracleContext& ctx, LossKind family,
                                                 const Eigen::VectorXd& margins);
[[nodiscard]] BregmanDirect bregman_error_direct(const OracleContext& ctx, const RatioModel& model);

/// Node weights w_k (1/2 l''(1, c) p + 1/2 l''(-1, c) q) of the population Hessian at center margins c.
[[nodiscard]] Eigen::VectorXd population_hessian_weights(const OracleContext& ctx, LossKind family,
                                                         const Eigen::VectorXd& center);

/// h^T H_lambda(center) h for h = sum_j coeffs_j k(points_j, .).
[[nodiscard]] double population_h_form(const OracleContext& ctx, LossKind family, const Eigen::VectorXd& center,
                                       double lambda, const KernelSpec& kernel, const PointMatrix& points,
                                       const Eigen::VectorXd& coeffs);

/// Mean of (predicted ratio - true ratio)^2 over the evaluation grid.
[[nodiscard]] double grid_mse(const OracleContext& ctx, const RatioModel& model);

/// Fit at a very small lambda on a large balanced sample, used as a stand-in
/// for the population minimizer.
struct ReferenceFitSpec {
    double lambda = 1e-6;
    std::size_t m = 2000;
    std::size_t n = 2000;
    std::uint64_t seed = 12345;
};

[[nodiscard]] RatioModel build_reference_fit(const OracleContext& ctx, LossKind family, const KernelSpec& kernel,
                                             const ReferenceFitSpec& spec = {});

struct SandwichReport {
    double fraction_pass = 0.0;
    std::size_t n_directions = 0;
    std::size_t lower_failures = 0;  ///< empirical form > 6 * population form
    std::size_t upper_failures = 0;  ///< 6 * population form > 48 * empirical form
    double min_ratio = 0.0;          ///< min over directions of population / empirical
    double max_ratio = 0.0;
};

/// Compares the empirical Hessian form at the fit on `data` with the population
/// form at the reference center along random coefficient directions.
[[nodiscard]] SandwichReport hessian_sandwich_test(const OracleContext& ctx, LossKind family,
                                                   const LabeledDataset& data, double lambda,
                                                   const RatioModel& reference_center, std::size_t n_directions,
                                                   std::uint64_t seed);

}  // namespace dre
