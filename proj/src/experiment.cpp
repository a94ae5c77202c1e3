#include "dre/experiment.hpp"

#include "dre/errors.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

namespace dre {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Runs task(i) for i in [0, count) on a small pool. Results are written by the
// tasks into pre-sized slots, so completion order does not matter; the first
// failure in index order is rethrown.
template <typename Task>
void run_indexed(std::size_t count, unsigned threads, Task&& task) {
    unsigned workers = threads != 0 ? threads : std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, count));
    std::vector<std::exception_ptr> errors(count);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                task(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
    const auto it = obj.find(key);
    if (it == obj.end()) return fallback;
    return it->get<T>();
}

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    const std::set<std::string> names(allowed.begin(), allowed.end());
    for (const auto& item : obj.items()) {
        if (!names.contains(item.key())) throw InputError(where + ": unknown key '" + item.key() + "'");
    }
}

GaussianPairSpec pair_from_json(const json& doc) {
    reject_unknown_keys(doc, {"mu_p", "sigma_p", "mu_q", "sigma_q"}, "pair");
    GaussianPairSpec pair;
    pair.mu_p = get_or(doc, "mu_p", pair.mu_p);
    pair.sigma_p = get_or(doc, "sigma_p", pair.sigma_p);
    pair.mu_q = get_or(doc, "mu_q", pair.mu_q);
    pair.sigma_q = get_or(doc, "sigma_q", pair.sigma_q);
    pair.validate();
    return pair;
}

ordered_json pair_to_json(const GaussianPairSpec& pair) {
    ordered_json doc;
    doc["mu_p"] = pair.mu_p;
    doc["sigma_p"] = pair.sigma_p;
    doc["mu_q"] = pair.mu_q;
    doc["sigma_q"] = pair.sigma_q;
    return doc;
}

ordered_json grid_to_json(const LambdaGrid& grid) {
    ordered_json doc;
    doc["first"] = grid.first;
    doc["ratio"] = grid.xi;
    doc["count"] = grid.count;
    return doc;
}

LambdaGrid grid_from_json(const json& doc) {
    if (doc.is_string()) return LambdaGrid::parse(doc.get<std::string>());
    reject_unknown_keys(doc, {"first", "ratio", "count"}, "grid");
    LambdaGrid grid;
    grid.first = get_or(doc, "first", grid.first);
    grid.xi = get_or(doc, "ratio", grid.xi);
    grid.count = get_or(doc, "count", grid.count);
    grid.validate();
    return grid;
}

ordered_json kernel_to_json(const KernelSpec& kernel) {
    ordered_json doc;
    doc["family"] = to_string(kernel.family);
    doc["bandwidth"] = kernel.bandwidth;
    return doc;
}

KernelSpec kernel_from_json(const json& doc) {
    reject_unknown_keys(doc, {"family", "bandwidth"}, "kernel");
    KernelSpec kernel;
    if (doc.contains("family")) kernel.family = parse_kernel_family(doc.at("family").get<std::string>());
    kernel.bandwidth = get_or(doc, "bandwidth", kernel.bandwidth);
    kernel.validate();
    return kernel;
}

ordered_json rule_params_to_json(const RuleParams& params) {
    ordered_json doc;
    doc["delta"] = params.consts.delta;
    doc["Q0"] = params.consts.Q0;
    doc["alpha"] = params.consts.alpha_cap;
    doc["threshold_scale"] = params.threshold_scale;
    doc["trace"] = to_string(params.trace);
    return doc;
}

RuleParams rule_params_from_json(const json& doc) {
    reject_unknown_keys(doc, {"delta", "Q0", "alpha", "threshold_scale", "trace"}, "rule_params");
    RuleParams params;
    params.consts.delta = get_or(doc, "delta", params.consts.delta);
    params.consts.Q0 = get_or(doc, "Q0", params.consts.Q0);
    params.consts.alpha_cap = get_or(doc, "alpha", params.consts.alpha_cap);
    params.threshold_scale = get_or(doc, "threshold_scale", params.threshold_scale);
    if (doc.contains("trace")) params.trace = parse_trace_convention(doc.at("trace").get<std::string>());
    params.consts.validate();
    if (!(params.threshold_scale > 0.0)) throw InputError("rule_params: threshold_scale must be positive");
    return params;
}

}  // namespace

std::string format_double(double value) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc()) return "nan";
    return std::string(buf, ptr);
}

void ExperimentConfig::validate() const {
    pair.validate();
    grid.validate();
    kernel.validate();
    if (losses.empty()) throw InputError("experiment: losses must be nonempty");
    if (sample_sizes.empty()) throw InputError("experiment: sample_sizes must be nonempty");
    if (seeds.empty()) throw InputError("experiment: seeds must be nonempty");
    for (const auto& s : sample_sizes) {
        if (s.n == 0) throw InputError("experiment: every sample size needs n >= 1");
    }
    if (rule == SelectionRule::KnownNormOracle) throw InputError("experiment: rule must be mj or eta-s");
    if (rule == SelectionRule::TheoreticalEtaS) params.consts.validate();
}

ExperimentConfig experiment_config_from_json(const json& doc) {
    try {
        if (!doc.is_object()) throw InputError("experiment config must be a JSON object");
        reject_unknown_keys(doc,
                            {"pair", "losses", "grid", "sample_sizes", "seeds", "rule", "rule_params", "kernel",
                             "output_dir", "bregman", "threads"},
                            "experiment config");
        ExperimentConfig config;
        if (doc.contains("pair")) config.pair = pair_from_json(doc.at("pair"));
        for (const auto& name : doc.at("losses")) config.losses.push_back(parse_loss_kind(name.get<std::string>()));
        if (doc.contains("grid")) config.grid = grid_from_json(doc.at("grid"));
        for (const auto& entry : doc.at("sample_sizes")) {
            SampleSize size;
            if (entry.is_array()) {
                if (entry.size() != 2) throw InputError("sample_sizes: entries must be [m, n]");
                size.m = entry.at(0).get<std::size_t>();
                size.n = entry.at(1).get<std::size_t>();
            } else {
                size.m = entry.at("m").get<std::size_t>();
                size.n = entry.at("n").get<std::size_t>();
            }
            config.sample_sizes.push_back(size);
        }
        const auto& seeds = doc.at("seeds");
        if (seeds.is_object()) {
            const auto count = seeds.at("count").get<std::uint64_t>();
            const auto first = get_or<std::uint64_t>(seeds, "first", 0);
            for (std::uint64_t s = 0; s < count; ++s) config.seeds.push_back(first + s);
        } else {
            for (const auto& s : seeds) config.seeds.push_back(s.get<std::uint64_t>());
        }
        if (doc.contains("rule")) config.rule = parse_selection_rule(doc.at("rule").get<std::string>());
        if (doc.contains("rule_params")) config.params = rule_params_from_json(doc.at("rule_params"));
        if (doc.contains("kernel")) config.kernel = kernel_from_json(doc.at("kernel"));
        if (doc.contains("output_dir")) config.output_dir = doc.at("output_dir").get<std::string>();
        config.bregman = get_or(doc, "bregman", false);
        config.threads = get_or(doc, "threads", 0u);
        config.validate();
        return config;
    } catch (const json::exception& e) {
        throw InputError(std::string("experiment config: ") + e.what());
    }
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError(path.string() + ": cannot open file");
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw InputError(path.string() + ": " + e.what());
    }
    return experiment_config_from_json(doc);
}

ordered_json experiment_config_to_json(const ExperimentConfig& config) {
    ordered_json doc;
    doc["pair"] = pair_to_json(config.pair);
    auto losses = ordered_json::array();
    for (auto l : config.losses) losses.push_back(to_string(l));
    doc["losses"] = losses;
    doc["grid"] = grid_to_json(config.grid);
    auto sizes = ordered_json::array();
    for (const auto& s : config.sample_sizes) sizes.push_back({s.m, s.n});
    doc["sample_sizes"] = sizes;
    doc["seeds"] = config.seeds;
    doc["rule"] = to_string(config.rule);
    doc["rule_params"] = rule_params_to_json(config.params);
    doc["kernel"] = kernel_to_json(config.kernel);
    doc["output_dir"] = config.output_dir.string();
    doc["bregman"] = config.bregman;
    return doc;
}

std::size_t error_rank(const std::vector<double>& errors, std::size_t index) {
    if (index >= errors.size()) throw InputError("error_rank: index out of range");
    const double chosen = errors[index];
    return 1 + static_cast<std::size_t>(std::count_if(errors.begin(), errors.end(),
                                                      [chosen](double e) { return e < chosen; }));
}

ExperimentReport run_experiment(const ExperimentConfig& config, const OracleContext& ctx) {
    config.validate();
    const auto lambdas = config.grid.values();
    ExperimentReport report;
    report.config = config;

    struct CellKey {
        LossKind loss;
        SampleSize size;
        std::uint64_t seed;
    };
    std::vector<CellKey> keys;
    for (auto loss : config.losses) {
        for (const auto& size : config.sample_sizes) {
            for (auto seed : config.seeds) keys.push_back({loss, size, seed});
        }
    }
    report.cells.resize(keys.size());

    run_indexed(keys.size(), config.threads, [&](std::size_t idx) {
        const CellKey& key = keys[idx];
        const LabeledDataset data = sample_pair(config.pair, key.size.m, key.size.n, key.seed);
        const GridFits fits = fit_grid(key.loss, config.kernel, data, lambdas);
        CellResult cell;
        cell.loss = key.loss;
        cell.size = key.size;
        cell.seed = key.seed;
        cell.selection = select_from_fits(data, key.loss, fits, lambdas, config.rule, config.params);
        cell.chosen_index = cell.selection.chosen_index;
        cell.chosen_lambda = cell.selection.chosen_lambda;
        std::vector<double> mses;
        for (std::size_t i = 0; i < lambdas.size(); ++i) {
            LambdaOutcome outcome;
            outcome.lambda = lambdas[i];
            outcome.mse = grid_mse(ctx, fits.fits[i].model);
            if (config.bregman) outcome.bregman = bregman_error_via_risk(ctx, fits.fits[i].model);
            outcome.fit = fits.fits[i].report;
            mses.push_back(outcome.mse);
            cell.per_lambda.push_back(std::move(outcome));
        }
        cell.rank = error_rank(mses, cell.chosen_index);
        report.cells[idx] = std::move(cell);
    });
    return report;
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
    return run_experiment(config, make_oracle_context(config.pair));
}

double top_rank_fraction(const ExperimentReport& report, LossKind loss, SampleSize size, std::size_t top) {
    std::size_t total = 0;
    std::size_t hits = 0;
    for (const auto& cell : report.cells) {
        if (cell.loss != loss || cell.size.m != size.m || cell.size.n != size.n) continue;
        ++total;
        if (cell.rank <= top) ++hits;
    }
    if (total == 0) throw InputError("top_rank_fraction: no cells for the requested loss and size");
    return static_cast<double>(hits) / static_cast<double>(total);
}

ordered_json experiment_report_to_json(const ExperimentReport& report) {
    ordered_json doc;
    doc["config"] = experiment_config_to_json(report.config);
    auto cells = ordered_json::array();
    for (const auto& cell : report.cells) {
        ordered_json c;
        c["loss"] = to_string(cell.loss);
        c["m"] = cell.size.m;
        c["n"] = cell.size.n;
        c["seed"] = cell.seed;
        c["chosen_lambda"] = cell.chosen_lambda;
        c["chosen_index"] = cell.chosen_index;
        c["rank"] = cell.rank;
        auto per = ordered_json::array();
        for (const auto& o : cell.per_lambda) {
            ordered_json e;
            e["lambda"] = o.lambda;
            e["mse"] = o.mse;
            e["bregman_error"] = o.bregman ? ordered_json(*o.bregman) : ordered_json(nullptr);
            e["fit"] = report_to_json(o.fit);
            per.push_back(std::move(e));
        }
        c["per_lambda"] = std::move(per);
        c["selection"] = selection_to_json(cell.selection);
        cells.push_back(std::move(c));
    }
    doc["cells"] = std::move(cells);

    auto summary = ordered_json::array();
    for (auto loss : report.config.losses) {
        for (const auto& size : report.config.sample_sizes) {
            ordered_json s;
            s["loss"] = to_string(loss);
            s["m"] = size.m;
            s["n"] = size.n;
            s["top1_fraction"] = top_rank_fraction(report, loss, size, 1);
            s["top2_fraction"] = top_rank_fraction(report, loss, size, 2);
            summary.push_back(std::move(s));
        }
    }
    doc["summary"] = std::move(summary);
    return doc;
}

std::string experiment_csv(const ExperimentReport& report) {
    std::ostringstream out;
    out << "loss,m,n,seed,lambda,mse,chosen,rank\n";
    for (const auto& cell : report.cells) {
        for (std::size_t i = 0; i < cell.per_lambda.size(); ++i) {
            const auto& o = cell.per_lambda[i];
            out << to_string(cell.loss) << ',' << cell.size.m << ',' << cell.size.n << ',' << cell.seed << ','
                << format_double(o.lambda) << ',' << format_double(o.mse) << ',' << (i == cell.chosen_index ? 1 : 0)
                << ',' << cell.rank << '\n';
        }
    }
    return out.str();
}

void RateSweepConfig::validate() const {
    pair.validate();
    grid.validate();
    kernel.validate();
    if (sizes.empty()) throw InputError("rate sweep: sizes must be nonempty");
    for (auto N : sizes) {
        if (N < 2) throw InputError("rate sweep: every size must be at least 2");
    }
    if (seed_count == 0) throw InputError("rate sweep: need at least one seed");
    if (rule == SelectionRule::KnownNormOracle) throw InputError("rate sweep: rule must be mj or eta-s");
    if (rule == SelectionRule::TheoreticalEtaS) params.consts.validate();
    (void)rate_exponent(r, alpha);
}

double median(std::vector<double> values) {
    if (values.empty()) throw InputError("median of an empty list");
    std::sort(values.begin(), values.end());
    const std::size_t mid = values.size() / 2;
    if (values.size() % 2 == 1) return values[mid];
    return 0.5 * (values[mid - 1] + values[mid]);
}

std::optional<double> loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) throw InputError("loglog_slope: length mismatch");
    if (xs.size() < 2) return std::nullopt;
    std::vector<double> lx;
    std::vector<double> ly;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!(xs[i] > 0.0) || !(ys[i] > 0.0)) return std::nullopt;
        lx.push_back(std::log(xs[i]));
        ly.push_back(std::log(ys[i]));
    }
    const auto n = static_cast<double>(lx.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxy += (lx[i] - mx) * (ly[i] - my);
        sxx += (lx[i] - mx) * (lx[i] - mx);
    }
    if (sxx == 0.0) return std::nullopt;
    return sxy / sxx;
}

RateSweepResult run_rate_sweep(const RateSweepConfig& config, const OracleContext& ctx) {
    config.validate();
    const auto lambdas = config.grid.values();
    RateSweepResult result;
    result.config = config;
    result.theoretical_exponent = rate_exponent(config.r, config.alpha);
    result.points.resize(config.sizes.size());
    for (std::size_t s = 0; s < config.sizes.size(); ++s) {
        result.points[s].N = config.sizes[s];
        result.points[s].errors.resize(config.seed_count);
        result.points[s].chosen_lambdas.resize(config.seed_count);
    }
    const std::size_t total = config.sizes.size() * config.seed_count;
    run_indexed(total, config.threads, [&](std::size_t idx) {
        const std::size_t s = idx / config.seed_count;
        const std::size_t k = idx % config.seed_count;
        const std::size_t N = config.sizes[s];
        const LabeledDataset data = sample_pair(config.pair, N / 2, N - N / 2, config.first_seed + k);
        const GridFits fits = fit_grid(config.loss, config.kernel, data, lambdas);
        const SelectionReport sel = select_from_fits(data, config.loss, fits, lambdas, config.rule, config.params);
        result.points[s].errors[k] = bregman_error_via_risk(ctx, fits.fits[sel.chosen_index].model);
        result.points[s].chosen_lambdas[k] = sel.chosen_lambda;
    });
    std::vector<double> xs;
    std::vector<double> ys;
    for (auto& point : result.points) {
        point.median_error = median(point.errors);
        xs.push_back(static_cast<double>(point.N));
        ys.push_back(point.median_error);
    }
    result.slope = loglog_slope(xs, ys);
    return result;
}

RateSweepResult run_rate_sweep(const RateSweepConfig& config) {
    return run_rate_sweep(config, make_oracle_context(config.pair));
}

ordered_json rate_sweep_to_json(const RateSweepResult& result) {
    const auto& c = result.config;
    ordered_json doc;
    ordered_json cfg;
    cfg["pair"] = pair_to_json(c.pair);
    cfg["loss"] = to_string(c.loss);
    cfg["sizes"] = c.sizes;
    cfg["seed_count"] = c.seed_count;
    cfg["first_seed"] = c.first_seed;
    cfg["rule"] = to_string(c.rule);
    cfg["rule_params"] = rule_params_to_json(c.params);
    cfg["grid"] = grid_to_json(c.grid);
    cfg["kernel"] = kernel_to_json(c.kernel);
    cfg["r"] = c.r;
    cfg["alpha"] = c.alpha;
    doc["config"] = std::move(cfg);
    auto points = ordered_json::array();
    for (const auto& p : result.points) {
        ordered_json e;
        e["N"] = p.N;
        e["median_error"] = p.median_error;
        e["errors"] = p.errors;
        e["chosen_lambdas"] = p.chosen_lambdas;
        points.push_back(std::move(e));
    }
    doc["points"] = std::move(points);
    doc["slope"] = result.slope ? ordered_json(*result.slope) : ordered_json(nullptr);
    doc["theoretical_exponent"] = result.theoretical_exponent;
    return doc;
}

std::string rate_sweep_csv(const RateSweepResult& result) {
    std::ostringstream out;
    out << "N,median_error\n";
    for (const auto& p : result.points) out << p.N << ',' << format_double(p.median_error) << '\n';
    return out.str();
}

}  // namespace dre
