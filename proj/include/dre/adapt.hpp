#pragma once

#include "dre/data.hpp"
#include "dre/solver.hpp"

#include <json.hpp>

#include <functional>
#include <optional>
#include <vector>

namespace dre {

/// Geometric candidates lambda_i = lambda0 * xi^i, i = 1..count (ascending).
/// Stored by its first value so that e.g. 1e-3 stays exact; lambda0 = first / xi.
struct LambdaGrid {
    double first = 1e-3;
    double xi = 10.0;
    std::size_t count = 5;

    /// Parses "lo:ratio:count" where lo is the first grid value.
    [[nodiscard]] static LambdaGrid parse(std::string_view text);

    void validate() const;
    [[nodiscard]] double lambda0() const noexcept { return first / xi; }
    [[nodiscard]] std::vector<double> values() const;
};

/// Diagonal of E: e_i = l''(y_i, f(x_i)) at a fitted model's training margins.
struct HessianWeights {
    Eigen::VectorXd e;
};

[[nodiscard]] HessianWeights hessian_weights(LossKind family, const Eigen::MatrixXd& K, const Eigen::VectorXd& alpha,
                                             const std::vector<int>& ys);
[[nodiscard]] HessianWeights hessian_weights(const RatioModel& model, const LabeledDataset& data);

/// (1/N)(a-b)^T K E K (a-b) + lambda_t (a-b)^T K (a-b): the squared distance of
/// two kernel expansions under the regularized empirical Hessian.
[[nodiscard]] double empirical_h_norm(const Eigen::MatrixXd& K, const HessianWeights& E, const Eigen::VectorXd& alpha,
                                      const Eigen::VectorXd& beta, double lambda_t);

/// Finite-rank trace (1/N) sum_i e_i K_ii of the empirical Hessian (lambda I excluded).
[[nodiscard]] double hessian_trace(const Eigen::MatrixXd& K, const HessianWeights& E, std::size_t N);

enum class TraceConvention {
    FiniteRank,  ///< (1/N) sum_i e_i K_ii
    Span,        ///< finite-rank part plus lambda * N, the identity counted on the N-point span
};

[[nodiscard]] std::string to_string(TraceConvention convention);
[[nodiscard]] TraceConvention parse_trace_convention(std::string_view name);
[[nodiscard]] double hessian_trace(const Eigen::MatrixXd& K, const HessianWeights& E, std::size_t N, double lambda,
                                   TraceConvention convention);

enum class BoundRule { SlowRate, FastRate };

/// Theory constants for the a priori bounds. Never estimated from data.
struct BoundConstants {
    double B1 = 1.0;
    double B2 = 1.0;
    double R = 1.0;
    double norm_fH = 1.0;
    double Q0 = 1.0;
    double L = 1.0;
    double r = 0.5;          ///< source condition, in (0, 1/2]
    double alpha_cap = 1.0;  ///< capacity, >= 1
    double delta = 0.05;     ///< confidence, in (0, 1/2]

    void validate() const;
    [[nodiscard]] double log_term() const;  ///< log(2 / delta)
};

/// Sample-error term S(N, delta, lambda).
[[nodiscard]] double s_term(BoundRule rule, const BoundConstants& c, std::size_t N, double lambda);
/// Approximation-error term A(lambda).
[[nodiscard]] double a_term(BoundRule rule, const BoundConstants& c, double lambda);
/// Weight eta in eta * S = A.
[[nodiscard]] double balance_eta(BoundRule rule, const BoundConstants& c);
/// lambda* solving eta * S(lambda*) = A(lambda*) in closed form; the balance is
/// re-checked to relative 1e-10 and a NumericalError is thrown if it fails.
[[nodiscard]] double balance_lambda(BoundRule rule, const BoundConstants& c, std::size_t N);

/// (2 r a + a) / (2 r a + a + 1).
[[nodiscard]] double rate_exponent(double r, double alpha_cap);

enum class SelectionRule {
    PracticalMj,      ///< threshold M_j / (lambda_j N), M_j = Tr(H_j)^{-2}
    TheoreticalEtaS,  ///< threshold 48 eta S(lambda_j)
    KnownNormOracle,  ///< threshold 8 eta S(lambda_j) under the population Hessian
};

[[nodiscard]] std::string to_string(SelectionRule rule);
[[nodiscard]] SelectionRule parse_selection_rule(std::string_view name);

struct RuleParams {
    BoundConstants consts;         ///< only Q0, alpha_cap and delta are read by the data-driven rules
    double threshold_scale = 1.0;  ///< multiplies every threshold (diagnostic)
    TraceConvention trace = TraceConvention::FiniteRank;  ///< read by PracticalMj only
};

struct PairwiseEntry {
    std::size_t i = 0;  ///< larger lambda index
    std::size_t j = 0;  ///< smaller lambda index
    double norm2 = 0.0;
    double threshold = 0.0;
    bool pass = false;
};

struct SelectionReport {
    SelectionRule rule = SelectionRule::PracticalMj;
    std::vector<double> grid;
    std::size_t chosen_index = 0;
    double chosen_lambda = 0.0;
    std::vector<PairwiseEntry> pairwise;
    std::vector<double> thresholds;     ///< threshold_j per grid value
    std::vector<double> per_lambda;     ///< M_j (PracticalMj) or S(lambda_j) (eta rules)
    std::vector<double> hessian_norms;  ///< ||(1/N) E K|| per lambda (diagnostic only)
    RuleParams params;
};

/// Chooses the largest grid index whose pairwise norms pass against every
/// smaller index. Index 0 always qualifies.
[[nodiscard]] std::size_t balancing_choice(std::size_t count, const std::vector<PairwiseEntry>& pairwise);

struct GridFits {
    Eigen::MatrixXd K;
    std::vector<FitResult> fits;
};

/// One fit per grid value, ascending. Errors name the failing lambda.
[[nodiscard]] GridFits fit_grid(LossKind family, const KernelSpec& kernel, const LabeledDataset& data,
                                const std::vector<double>& lambdas, const FitOptions& opts = {});

/// Balancing-principle choice over precomputed fits with the empirical Hessian norm.
[[nodiscard]] SelectionReport select_from_fits(const LabeledDataset& data, LossKind family, const GridFits& fits,
                                               const std::vector<double>& lambdas, SelectionRule rule,
                                               const RuleParams& params);

[[nodiscard]] SelectionReport select_lambda(const LabeledDataset& data, LossKind family, const KernelSpec& kernel,
                                            const LambdaGrid& grid, SelectionRule rule, const RuleParams& params,
                                            const FitOptions& opts = {});

/// Quadratic form c -> c^T H_lambda(f_H) c over the fits' expansion points.
using PopulationForm = std::function<double(const Eigen::VectorXd& coeffs, double lambda)>;

/// Known-norm balancing choice (threshold 8 eta S) with a supplied population form.
[[nodiscard]] SelectionReport known_norm_select(const std::vector<double>& lambdas,
                                                const std::vector<RatioModel>& fits, const PopulationForm& form,
                                                const BoundConstants& consts, std::size_t N,
                                                double threshold_scale = 1.0);

[[nodiscard]] nlohmann::ordered_json selection_to_json(const SelectionReport& report);

}  // namespace dre
