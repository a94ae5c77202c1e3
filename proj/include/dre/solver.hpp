#pragma once

#include "dre/data.hpp"
#include "dre/kernel.hpp"
#include "dre/loss.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <vector>

namespace dre {

/// f(x) = sum_j alpha_j k(x_j, x) with ratio estimate g(f(x)).
struct RatioModel {
    KernelSpec kernel;
    LossKind family = LossKind::KuLSIF;
    PointMatrix points;
    Eigen::VectorXd alpha;
    double lambda = 1.0;
    std::uint64_t seed = 0;
    std::uint64_t data_hash = 0;
};

enum class FitMethod { NonlinearCG, ClosedForm };

/// Inner product used to turn the alpha-gradient into a CG direction.
enum class CgMetric {
    Rkhs,       ///< <a, b> = a^T K b; steepest descent is -(K^{-1} grad)
    Euclidean,  ///< plain alpha-space gradient; badly conditioned for smooth kernels
};

[[nodiscard]] std::string to_string(FitMethod method);

struct FitOptions {
    /// Gradient-norm tolerance; defaults to 1e-8 * N when unset.
    std::optional<double> tol_grad;
    int max_iters = 5000;
    /// Solve the linear optimality system for KuLSIF and SQ instead of running CG.
    bool closed_form = true;
    CgMetric metric = CgMetric::Rkhs;
    double armijo_c = 1e-4;
    int max_halvings = 60;
    /// Keep the objective value of every accepted iterate in FitReport::trace.
    bool record_trace = false;
};

struct FitReport {
    int iterations = 0;
    double grad_norm = 0.0;
    double objective = 0.0;
    bool converged = false;
    FitMethod method = FitMethod::NonlinearCG;
    double tol_grad = 0.0;
    std::vector<double> trace;
};

struct ObjectiveValue {
    double value = 0.0;
    Eigen::VectorXd grad;
};

/// Empirical objective (1/N) sum_i l(y_i, (K alpha)_i) + (lambda/2) alpha^T K alpha and its
/// gradient in alpha.
[[nodiscard]] ObjectiveValue objective_and_gradient(LossKind family, const Eigen::MatrixXd& K,
                                                    const std::vector<int>& ys, const Eigen::VectorXd& alpha,
                                                    double lambda);

/// Linear-solve minimizer for the quadratic losses (KuLSIF, SQ).
[[nodiscard]] Eigen::VectorXd closed_form_fit(LossKind family, const Eigen::MatrixXd& K, const std::vector<int>& ys,
                                              double lambda);

struct FitResult {
    RatioModel model;
    FitReport report;
};

/// Minimize the objective over the representer coefficients. Uses the closed
/// form for KuLSIF/SQ when opts.closed_form is set, otherwise Polak-Ribiere+
/// nonlinear CG with Armijo backtracking from alpha = 0.
[[nodiscard]] FitResult fit(LossKind family, const KernelSpec& kernel, const LabeledDataset& data, double lambda,
                            const FitOptions& opts = {});
/// Same, with a precomputed Gram matrix of data.xs.
[[nodiscard]] FitResult fit(LossKind family, const KernelSpec& kernel, const LabeledDataset& data,
                            const Eigen::MatrixXd& K, double lambda, const FitOptions& opts = {});

[[nodiscard]] double predict_margin(const RatioModel& model, std::span<const double> x);
[[nodiscard]] double predict_ratio(const RatioModel& model, std::span<const double> x);
/// Margins at many points, evaluated in blocks to bound memory.
[[nodiscard]] Eigen::VectorXd predict_margins(const RatioModel& model, const PointMatrix& xs);

[[nodiscard]] nlohmann::ordered_json model_to_json(const RatioModel& model);
[[nodiscard]] RatioModel model_from_json(const nlohmann::json& doc);
[[nodiscard]] nlohmann::ordered_json report_to_json(const FitReport& report);

}  // namespace dre
