#include "dre/adapt.hpp"

#include "dre/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace dre {

namespace {

double parse_double(std::string_view text, std::string_view what) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
        throw InputError("cannot parse " + std::string(what) + " '" + std::string(text) + "'");
    }
    return v;
}

// Largest eigenvalue of (1/N) E^{1/2} K E^{1/2}, i.e. the operator norm of the
// finite-rank part of the empirical Hessian. Power iteration.
double hessian_operator_norm(const Eigen::MatrixXd& K, const HessianWeights& E) {
    const auto n = K.rows();
    const Eigen::VectorXd s = E.e.cwiseSqrt();
    Eigen::VectorXd v = Eigen::VectorXd::Ones(n).normalized();
    double value = 0.0;
    for (int it = 0; it < 200; ++it) {
        Eigen::VectorXd w = s.cwiseProduct(K * s.cwiseProduct(v)) / static_cast<double>(n);
        const double next = w.norm();
        if (next == 0.0) return 0.0;
        v = w / next;
        if (std::abs(next - value) <= 1e-12 * next) return next;
        value = next;
    }
    return value;
}

}  // namespace

LambdaGrid LambdaGrid::parse(std::string_view text) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        const auto pos = text.find(':', start);
        parts.push_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    if (parts.size() != 3) throw InputError("grid must be lo:ratio:count, got '" + std::string(text) + "'");
    LambdaGrid grid;
    grid.first = parse_double(parts[0], "grid start");
    grid.xi = parse_double(parts[1], "grid ratio");
    const double count = parse_double(parts[2], "grid count");
    if (count < 1 || count != std::floor(count)) throw InputError("grid count must be a positive integer");
    grid.count = static_cast<std::size_t>(count);
    grid.validate();
    return grid;
}

void LambdaGrid::validate() const {
    if (!(first > 0.0) || !std::isfinite(first)) throw InputError("grid: first value must be positive");
    if (!(xi > 1.0) || !std::isfinite(xi)) throw InputError("grid: ratio must be > 1");
    if (count == 0) throw InputError("grid: count must be >= 1");
}

std::vector<double> LambdaGrid::values() const {
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = first * std::pow(xi, static_cast<double>(i));
    return out;
}

HessianWeights hessian_weights(LossKind family, const Eigen::MatrixXd& K, const Eigen::VectorXd& alpha,
                               const std::vector<int>& ys) {
    const Eigen::VectorXd f = K * alpha;
    HessianWeights w;
    w.e.resize(f.size());
    for (Eigen::Index i = 0; i < f.size(); ++i) w.e(i) = loss_curvature(family, ys[static_cast<std::size_t>(i)], f(i));
    return w;
}

HessianWeights hessian_weights(const RatioModel& model, const LabeledDataset& data) {
    if (model.points.rows() != data.xs.rows()) throw InputError("hessian_weights: model was not trained on this dataset");
    return hessian_weights(model.family, gram_matrix(model.kernel, data.xs), model.alpha, data.ys);
}

double empirical_h_norm(const Eigen::MatrixXd& K, const HessianWeights& E, const Eigen::VectorXd& alpha,
                        const Eigen::VectorXd& beta, double lambda_t) {
    if (alpha.size() != K.rows() || beta.size() != K.rows() || E.e.size() != K.rows()) {
        throw InputError("empirical_h_norm: dimension mismatch");
    }
    if (!(lambda_t > 0.0)) throw InputError("empirical_h_norm: lambda must be positive");
    const Eigen::VectorXd diff = alpha - beta;
    const Eigen::VectorXd kd = K * diff;
    const double data_term = kd.dot(E.e.cwiseProduct(kd)) / static_cast<double>(K.rows());
    return std::max(0.0, data_term + lambda_t * diff.dot(kd));
}

double hessian_trace(const Eigen::MatrixXd& K, const HessianWeights& E, std::size_t N) {
    if (N == 0) throw InputError("hessian_trace: N must be positive");
    return E.e.dot(K.diagonal()) / static_cast<double>(N);
}

std::string to_string(TraceConvention convention) {
    return convention == TraceConvention::Span ? "span" : "finite-rank";
}

TraceConvention parse_trace_convention(std::string_view name) {
    if (name == "finite-rank" || name == "finite_rank") return TraceConvention::FiniteRank;
    if (name == "span") return TraceConvention::Span;
    throw InputError("unknown trace convention '" + std::string(name) + "' (expected finite-rank or span)");
}

double hessian_trace(const Eigen::MatrixXd& K, const HessianWeights& E, std::size_t N, double lambda,
                     TraceConvention convention) {
    const double finite = hessian_trace(K, E, N);
    if (convention == TraceConvention::FiniteRank) return finite;
    return finite + lambda * static_cast<double>(N);
}

void BoundConstants::validate() const {
    for (double v : {B1, B2, R, norm_fH, Q0, L}) {
        if (!(v > 0.0) || !std::isfinite(v)) throw InputError("bound constants must be positive and finite");
    }
    if (!(r > 0.0 && r <= 0.5)) throw InputError("source exponent r must lie in (0, 1/2]");
    if (!(alpha_cap >= 1.0) || !std::isfinite(alpha_cap)) throw InputError("capacity alpha must be >= 1");
    if (!(delta > 0.0 && delta <= 0.5)) throw InputError("delta must lie in (0, 1/2]");
}

double BoundConstants::log_term() const { return std::log(2.0 / delta); }

double s_term(BoundRule rule, const BoundConstants& c, std::size_t N, double lambda) {
    const auto n = static_cast<double>(N);
    if (rule == BoundRule::SlowRate) return 168.0 * c.B1 * c.B1 / (lambda * n) * c.log_term();
    return 414.0 * c.Q0 * c.Q0 / (n * std::pow(lambda, 1.0 / c.alpha_cap)) * c.log_term();
}

double a_term(BoundRule rule, const BoundConstants& c, double lambda) {
    if (rule == BoundRule::SlowRate) return 4.0 * lambda * c.norm_fH * c.norm_fH;
    return 414.0 * c.L * c.L * std::pow(lambda, 1.0 + 2.0 * c.r);
}

double balance_eta(BoundRule rule, const BoundConstants& c) {
    if (rule == BoundRule::SlowRate) return 256.0 * c.R * c.R * c.norm_fH * c.norm_fH / 42.0;
    return 1296.0 / c.log_term();
}

double balance_lambda(BoundRule rule, const BoundConstants& c, std::size_t N) {
    c.validate();
    if (N == 0) throw InputError("balance_lambda: N must be positive");
    const auto n = static_cast<double>(N);
    double lambda = 0.0;
    if (rule == BoundRule::SlowRate) {
        lambda = 16.0 * c.B1 * c.R * std::sqrt(c.log_term()) / std::sqrt(n);
    } else {
        const double a = c.alpha_cap;
        lambda = std::pow(1296.0 * c.Q0 * c.Q0 / (n * c.L * c.L), a / (1.0 + 2.0 * c.r * a + a));
    }
    const double lhs = balance_eta(rule, c) * s_term(rule, c, N, lambda);
    const double rhs = a_term(rule, c, lambda);
    if (!(std::abs(lhs - rhs) <= 1e-10 * std::max(std::abs(lhs), std::abs(rhs)))) {
        std::ostringstream msg;
        msg << "balance_lambda: eta*S = " << lhs << " != A = " << rhs << " at lambda* = " << lambda;
        throw NumericalError(msg.str());
    }
    return lambda;
}

double rate_exponent(double r, double alpha_cap) {
    if (!(r > 0.0 && r <= 0.5)) throw InputError("rate_exponent: r must lie in (0, 1/2]");
    if (!(alpha_cap >= 1.0) || !std::isfinite(alpha_cap)) throw InputError("rate_exponent: alpha must be >= 1");
    const double num = 2.0 * r * alpha_cap + alpha_cap;
    return num / (num + 1.0);
}

std::string to_string(SelectionRule rule) {
    switch (rule) {
        case SelectionRule::PracticalMj: return "mj";
        case SelectionRule::TheoreticalEtaS: return "eta-s";
        case SelectionRule::KnownNormOracle: return "known-norm";
    }
    return "unknown";
}

SelectionRule parse_selection_rule(std::string_view name) {
    if (name == "mj") return SelectionRule::PracticalMj;
    if (name == "eta-s" || name == "eta_s") return SelectionRule::TheoreticalEtaS;
    throw InputError("unknown selection rule '" + std::string(name) + "' (expected mj or eta-s)");
}

std::size_t balancing_choice(std::size_t count, const std::vector<PairwiseEntry>& pairwise) {
    std::vector<bool> ok(count, true);
    for (const auto& p : pairwise) {
        if (!p.pass) ok[p.i] = false;
    }
    std::size_t chosen = 0;
    for (std::size_t i = 0; i < count; ++i) {
        if (ok[i]) chosen = i;
    }
    return chosen;
}

GridFits fit_grid(LossKind family, const KernelSpec& kernel, const LabeledDataset& data,
                  const std::vector<double>& lambdas, const FitOptions& opts) {
    kernel.validate();
    data.validate();
    GridFits out;
    out.K = gram_matrix(kernel, data.xs);
    out.fits.reserve(lambdas.size());
    for (double lambda : lambdas) {
        try {
            out.fits.push_back(fit(family, kernel, data, out.K, lambda, opts));
        } catch (const std::exception& e) {
            std::ostringstream msg;
            msg << "fit failed at lambda=" << lambda << ": " << e.what();
            throw NumericalError(msg.str());
        }
    }
    return out;
}

SelectionReport select_from_fits(const LabeledDataset& data, LossKind family, const GridFits& fits,
                                 const std::vector<double>& lambdas, SelectionRule rule, const RuleParams& params) {
    if (lambdas.empty()) throw InputError("select_lambda: empty grid");
    if (fits.fits.size() != lambdas.size()) throw InputError("select_lambda: one fit per grid value required");
    if (rule == SelectionRule::KnownNormOracle) throw InputError("select_lambda: use known_norm_select for the oracle rule");
    if (rule == SelectionRule::TheoreticalEtaS) params.consts.validate();
    const std::size_t l = lambdas.size();
    const std::size_t N = data.size();

    SelectionReport report;
    report.rule = rule;
    report.grid = lambdas;
    report.params = params;
    report.thresholds.resize(l);
    report.per_lambda.resize(l);
    report.hessian_norms.resize(l);

    std::vector<HessianWeights> weights;
    weights.reserve(l);
    for (std::size_t j = 0; j < l; ++j) {
        weights.push_back(hessian_weights(family, fits.K, fits.fits[j].model.alpha, data.ys));
        report.hessian_norms[j] = hessian_operator_norm(fits.K, weights[j]);
        if (rule == SelectionRule::PracticalMj) {
            const double trace = hessian_trace(fits.K, weights[j], N, lambdas[j], params.trace);
            const double M = 1.0 / (trace * trace);
            report.per_lambda[j] = M;
            report.thresholds[j] = params.threshold_scale * M / (lambdas[j] * static_cast<double>(N));
        } else {
            const double S = s_term(BoundRule::FastRate, params.consts, N, lambdas[j]);
            report.per_lambda[j] = S;
            report.thresholds[j] =
                params.threshold_scale * 48.0 * balance_eta(BoundRule::FastRate, params.consts) * S;
        }
    }
    for (std::size_t i = 1; i < l; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            PairwiseEntry p;
            p.i = i;
            p.j = j;
            p.norm2 = empirical_h_norm(fits.K, weights[j], fits.fits[i].model.alpha, fits.fits[j].model.alpha,
                                       lambdas[j]);
            p.threshold = report.thresholds[j];
            p.pass = p.norm2 <= p.threshold;
            report.pairwise.push_back(p);
        }
    }
    report.chosen_index = balancing_choice(l, report.pairwise);
    report.chosen_lambda = lambdas[report.chosen_index];
    return report;
}

SelectionReport select_lambda(const LabeledDataset& data, LossKind family, const KernelSpec& kernel,
                              const LambdaGrid& grid, SelectionRule rule, const RuleParams& params,
                              const FitOptions& opts) {
    grid.validate();
    const auto lambdas = grid.values();
    const GridFits fits = fit_grid(family, kernel, data, lambdas, opts);
    return select_from_fits(data, family, fits, lambdas, rule, params);
}

SelectionReport known_norm_select(const std::vector<double>& lambdas, const std::vector<RatioModel>& fits,
                                  const PopulationForm& form, const BoundConstants& consts, std::size_t N,
                                  double threshold_scale) {
    if (lambdas.empty()) throw InputError("known_norm_select: empty grid");
    if (fits.size() != lambdas.size()) throw InputError("known_norm_select: one fit per grid value required");
    consts.validate();
    const std::size_t l = lambdas.size();
    SelectionReport report;
    report.rule = SelectionRule::KnownNormOracle;
    report.grid = lambdas;
    report.params.consts = consts;
    report.params.threshold_scale = threshold_scale;
    report.thresholds.resize(l);
    report.per_lambda.resize(l);
    const double eta = balance_eta(BoundRule::FastRate, consts);
    for (std::size_t j = 0; j < l; ++j) {
        report.per_lambda[j] = s_term(BoundRule::FastRate, consts, N, lambdas[j]);
        report.thresholds[j] = threshold_scale * 8.0 * eta * report.per_lambda[j];
    }
    for (std::size_t i = 1; i < l; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            PairwiseEntry p;
            p.i = i;
            p.j = j;
            p.norm2 = form(fits[i].alpha - fits[j].alpha, lambdas[j]);
            p.threshold = report.thresholds[j];
            p.pass = p.norm2 <= p.threshold;
            report.pairwise.push_back(p);
        }
    }
    report.chosen_index = balancing_choice(l, report.pairwise);
    report.chosen_lambda = lambdas[report.chosen_index];
    return report;
}

nlohmann::ordered_json selection_to_json(const SelectionReport& report) {
    nlohmann::ordered_json doc;
    doc["rule"] = to_string(report.rule);
    doc["grid"] = report.grid;
    doc["chosen_index"] = report.chosen_index;
    doc["chosen_lambda"] = report.chosen_lambda;
    doc["threshold_scale"] = report.params.threshold_scale;
    if (report.rule == SelectionRule::PracticalMj) {
        doc["trace_convention"] = to_string(report.params.trace);
    } else {
        const auto& c = report.params.consts;
        doc["delta"] = c.delta;
        doc["alpha"] = c.alpha_cap;
        doc["Q0"] = c.Q0;
    }
    doc["thresholds"] = report.thresholds;
    doc[report.rule == SelectionRule::PracticalMj ? "M" : "S"] = report.per_lambda;
    doc["hessian_norms"] = report.hessian_norms;
    auto pairs = nlohmann::ordered_json::array();
    for (const auto& p : report.pairwise) {
        nlohmann::ordered_json e;
        e["i"] = p.i;
        e["j"] = p.j;
        e["lambda_i"] = report.grid[p.i];
        e["lambda_j"] = report.grid[p.j];
        e["norm2"] = p.norm2;
        e["threshold"] = p.threshold;
        e["pass"] = p.pass;
        pairs.push_back(std::move(e));
    }
    doc["pairwise"] = std::move(pairs);
    return doc;
}

}  // namespace dre
