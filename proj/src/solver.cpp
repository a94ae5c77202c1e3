#include "dre/solver.hpp"

#include "dre/errors.hpp"

#include <cmath>
#include <limits>

namespace dre {

namespace {

void check_fit_inputs(const Eigen::MatrixXd& K, const std::vector<int>& ys, double lambda) {
    if (K.rows() != K.cols() || static_cast<std::size_t>(K.rows()) != ys.size()) {
        throw InputError("dimension mismatch between Gram matrix and labels");
    }
    if (ys.empty()) throw InputError("empty dataset");
    if (!(lambda > 0.0) || !std::isfinite(lambda)) {
        throw InputError("lambda must be positive and finite, got " + std::to_string(lambda));
    }
}

struct MarginState {
    double loss_mean = 0.0;
    Eigen::VectorXd d1;  // l'(y_i, f_i)
};

MarginState evaluate_margins(LossKind family, const std::vector<int>& ys, const Eigen::VectorXd& f) {
    const auto n = f.size();
    MarginState s;
    s.d1.resize(n);
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto d = loss_derivs(family, ys[static_cast<std::size_t>(i)], f(i));
        total += d.value;
        s.d1(i) = d.d1;
    }
    s.loss_mean = total / static_cast<double>(n);
    return s;
}

double loss_mean_only(LossKind family, const std::vector<int>& ys, const Eigen::VectorXd& f) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < f.size(); ++i) total += loss_derivs(family, ys[static_cast<std::size_t>(i)], f(i)).value;
    return total / static_cast<double>(f.size());
}

constexpr Eigen::Index kPredictBlock = 1024;

}  // namespace

std::string to_string(FitMethod method) {
    return method == FitMethod::ClosedForm ? "closed_form" : "nonlinear_cg";
}

ObjectiveValue objective_and_gradient(LossKind family, const Eigen::MatrixXd& K, const std::vector<int>& ys,
                                      const Eigen::VectorXd& alpha, double lambda) {
    check_fit_inputs(K, ys, lambda);
    if (alpha.size() != K.rows()) throw InputError("alpha has the wrong length");
    const Eigen::VectorXd f = K * alpha;
    const MarginState s = evaluate_margins(family, ys, f);
    const double inv_n = 1.0 / static_cast<double>(ys.size());
    ObjectiveValue out;
    out.value = s.loss_mean + 0.5 * lambda * alpha.dot(f);
    out.grad = K * (inv_n * s.d1 + lambda * alpha);
    return out;
}

Eigen::VectorXd closed_form_fit(LossKind family, const Eigen::MatrixXd& K, const std::vector<int>& ys,
                                double lambda) {
    check_fit_inputs(K, ys, lambda);
    const auto n = K.rows();
    const double inv_n = 1.0 / static_cast<double>(n);
    Eigen::VectorXd alpha;
    if (family == LossKind::KuLSIF) {
        // ((1/N) D K + lambda I) alpha = b / N, D = diag((1-y)/2), b = (1+y)/2
        Eigen::MatrixXd A = lambda * Eigen::MatrixXd::Identity(n, n);
        Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            if (ys[static_cast<std::size_t>(i)] == -1) {
                A.row(i) += inv_n * K.row(i);
            } else {
                b(i) = inv_n;
            }
        }
        alpha = A.partialPivLu().solve(b);
    } else if (family == LossKind::SQ) {
        // ((2/N) K + lambda I) alpha = (2/N) y, symmetric positive definite
        Eigen::MatrixXd A = (2.0 * inv_n) * K;
        A.diagonal().array() += lambda;
        Eigen::VectorXd rhs(n);
        for (Eigen::Index i = 0; i < n; ++i) rhs(i) = 2.0 * inv_n * ys[static_cast<std::size_t>(i)];
        const Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
        if (ldlt.info() != Eigen::Success) throw NumericalError("closed_form_fit(sq): factorization failed");
        alpha = ldlt.solve(rhs);
    } else {
        throw InputError("closed_form_fit: only kulsif and sq have a closed form, got " + to_string(family));
    }
    if (!alpha.allFinite()) throw NumericalError("closed_form_fit: singular system");
    return alpha;
}

FitResult fit(LossKind family, const KernelSpec& kernel, const LabeledDataset& data, double lambda,
              const FitOptions& opts) {
    kernel.validate();
    data.validate();
    return fit(family, kernel, data, gram_matrix(kernel, data.xs), lambda, opts);
}

FitResult fit(LossKind family, const KernelSpec& kernel, const LabeledDataset& data, const Eigen::MatrixXd& K,
              double lambda, const FitOptions& opts) {
    const std::vector<int>& ys = data.ys;
    check_fit_inputs(K, ys, lambda);
    const auto n = K.rows();
    const double inv_n = 1.0 / static_cast<double>(n);

    FitResult result;
    RatioModel& model = result.model;
    model.kernel = kernel;
    model.family = family;
    model.points = data.xs;
    model.lambda = lambda;
    model.data_hash = dataset_hash(data);
    FitReport& report = result.report;
    report.tol_grad = opts.tol_grad.value_or(1e-8 * static_cast<double>(n));

    const bool quadratic = family == LossKind::KuLSIF || family == LossKind::SQ;
    if (quadratic && opts.closed_form) {
        model.alpha = closed_form_fit(family, K, ys, lambda);
        const auto ov = objective_and_gradient(family, K, ys, model.alpha, lambda);
        report.method = FitMethod::ClosedForm;
        report.objective = ov.value;
        report.grad_norm = ov.grad.norm();
        report.converged = report.grad_norm <= report.tol_grad;
        if (opts.record_trace) report.trace.push_back(ov.value);
        return result;
    }

    // Polak-Ribiere+ nonlinear CG. The alpha-gradient is K r with
    // r = (1/N) l' + lambda alpha; in the RKHS metric the steepest-descent
    // direction is -r itself. Each trial point along alpha + t d only needs
    // f + t Kd and the quadratic form, so a line-search probe costs O(N).
    report.method = FitMethod::NonlinearCG;
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd f = Eigen::VectorXd::Zero(n);
    MarginState state = evaluate_margins(family, ys, f);
    double objective = state.loss_mean;
    Eigen::VectorXd resid = inv_n * state.d1;
    Eigen::VectorXd grad = K * resid;
    auto precondition = [&](const Eigen::VectorXd& r, const Eigen::VectorXd& g) -> const Eigen::VectorXd& {
        return opts.metric == CgMetric::Rkhs ? r : g;
    };
    Eigen::VectorXd dir = -precondition(resid, grad);
    int since_restart = 0;
    if (opts.record_trace) report.trace.push_back(objective);

    int iter = 0;
    for (; iter < opts.max_iters; ++iter) {
        const double gnorm = grad.norm();
        if (gnorm <= report.tol_grad) {
            report.converged = true;
            break;
        }
        double slope = grad.dot(dir);
        bool steepest = false;
        if (!(slope < 0.0) || since_restart >= n) {
            dir = -precondition(resid, grad);
            slope = grad.dot(dir);
            since_restart = 0;
            steepest = true;
        }
        if (!(slope < 0.0)) break;  // gradient has vanished in the working metric

        const Eigen::VectorXd kd = K * dir;
        const double dkd = dir.dot(kd);
        const double akd = alpha.dot(kd);
        const double aka = alpha.dot(f);
        double curvature = lambda * dkd;
        for (Eigen::Index i = 0; i < n; ++i) {
            curvature += inv_n * loss_curvature(family, ys[static_cast<std::size_t>(i)], f(i)) * kd(i) * kd(i);
        }
        double step = (curvature > 0.0 && std::isfinite(curvature)) ? -slope / curvature : 1.0;

        bool accepted = false;
        for (int h = 0; h <= opts.max_halvings; ++h) {
            const Eigen::VectorXd f_trial = f + step * kd;
            const double trial = loss_mean_only(family, ys, f_trial) +
                                 0.5 * lambda * (aka + 2.0 * step * akd + step * step * dkd);
            if (std::isfinite(trial) && trial <= objective + opts.armijo_c * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            if (steepest) {
                throw NumericalError("line search failed after " + std::to_string(opts.max_halvings) +
                                     " halvings (lambda=" + std::to_string(lambda) + ", iteration " +
                                     std::to_string(iter) + ", |grad|=" + std::to_string(gnorm) + ")");
            }
            since_restart = static_cast<int>(n);  // retry along steepest descent
            continue;
        }

        alpha += step * dir;
        f = K * alpha;
        state = evaluate_margins(family, ys, f);
        objective = state.loss_mean + 0.5 * lambda * alpha.dot(f);
        if (opts.record_trace) report.trace.push_back(objective);

        Eigen::VectorXd new_resid = inv_n * state.d1 + lambda * alpha;
        Eigen::VectorXd new_grad = K * new_resid;
        const Eigen::VectorXd& z_old = precondition(resid, grad);
        const Eigen::VectorXd& z_new = precondition(new_resid, new_grad);
        const double denom = grad.dot(z_old);
        const double beta = denom > 0.0 ? std::max(0.0, (new_grad - grad).dot(z_new) / denom) : 0.0;
        dir = -z_new + beta * dir;
        resid = std::move(new_resid);
        grad = std::move(new_grad);
        ++since_restart;
    }
    if (!report.converged && grad.norm() <= report.tol_grad) report.converged = true;

    model.alpha = alpha;
    report.iterations = iter;
    report.grad_norm = grad.norm();
    report.objective = state.loss_mean + 0.5 * lambda * alpha.dot(f);
    return result;
}

double predict_margin(const RatioModel& model, std::span<const double> x) {
    if (static_cast<Eigen::Index>(x.size()) != model.points.cols()) {
        throw InputError("predict: point has dimension " + std::to_string(x.size()) + ", model expects " +
                         std::to_string(model.points.cols()));
    }
    double f = 0.0;
    for (Eigen::Index j = 0; j < model.points.rows(); ++j) {
        const auto row = model.points.row(j);
        f += model.alpha(j) * kernel_eval(model.kernel, x, {row.data(), static_cast<std::size_t>(row.size())});
    }
    return f;
}

double predict_ratio(const RatioModel& model, std::span<const double> x) {
    return ratio_map(model.family, predict_margin(model, x));
}

Eigen::VectorXd predict_margins(const RatioModel& model, const PointMatrix& xs) {
    if (xs.cols() != model.points.cols()) {
        throw InputError("predict: points have dimension " + std::to_string(xs.cols()) + ", model expects " +
                         std::to_string(model.points.cols()));
    }
    Eigen::VectorXd out(xs.rows());
    for (Eigen::Index start = 0; start < xs.rows(); start += kPredictBlock) {
        const Eigen::Index len = std::min(kPredictBlock, xs.rows() - start);
        const PointMatrix block = xs.middleRows(start, len);
        out.segment(start, len) = cross_kernel(model.kernel, block, model.points) * model.alpha;
    }
    return out;
}

nlohmann::ordered_json model_to_json(const RatioModel& model) {
    nlohmann::ordered_json doc;
    doc["kernel_family"] = to_string(model.kernel.family);
    doc["bandwidth"] = model.kernel.bandwidth;
    doc["loss"] = to_string(model.family);
    doc["lambda"] = model.lambda;
    doc["dim"] = model.points.cols();
    doc["points"] = std::vector<double>(model.points.data(), model.points.data() + model.points.size());
    doc["alpha"] = std::vector<double>(model.alpha.data(), model.alpha.data() + model.alpha.size());
    doc["seed"] = model.seed;
    doc["dataset_hash"] = model.data_hash;
    return doc;
}

RatioModel model_from_json(const nlohmann::json& doc) {
    try {
        RatioModel model;
        model.kernel.family = parse_kernel_family(doc.at("kernel_family").get<std::string>());
        model.kernel.bandwidth = doc.at("bandwidth").get<double>();
        model.kernel.validate();
        model.family = parse_loss_kind(doc.at("loss").get<std::string>());
        model.lambda = doc.at("lambda").get<double>();
        const auto dim = doc.at("dim").get<Eigen::Index>();
        const auto points = doc.at("points").get<std::vector<double>>();
        const auto alpha = doc.at("alpha").get<std::vector<double>>();
        if (dim <= 0 || points.size() != alpha.size() * static_cast<std::size_t>(dim)) {
            throw InputError("model JSON: points/alpha/dim are inconsistent");
        }
        model.points = Eigen::Map<const PointMatrix>(points.data(), static_cast<Eigen::Index>(alpha.size()), dim);
        model.alpha = Eigen::Map<const Eigen::VectorXd>(alpha.data(), static_cast<Eigen::Index>(alpha.size()));
        model.seed = doc.value("seed", std::uint64_t{0});
        model.data_hash = doc.value("dataset_hash", std::uint64_t{0});
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("model JSON: ") + e.what());
    }
}

nlohmann::ordered_json report_to_json(const FitReport& report) {
    nlohmann::ordered_json doc;
    doc["method"] = to_string(report.method);
    doc["iterations"] = report.iterations;
    doc["grad_norm"] = report.grad_norm;
    doc["tol_grad"] = report.tol_grad;
    doc["objective"] = report.objective;
    doc["converged"] = report.converged;
    return doc;
}

}  // namespace dre
