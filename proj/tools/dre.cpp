#include "dre/adapt.hpp"
#include "dre/errors.hpp"
#include "dre/experiment.hpp"
#include "dre/solver.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

using nlohmann::ordered_json;

constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

struct DataOptions {
    std::string p_csv;
    std::string q_csv;
    bool synthetic = false;
    std::size_t m = 100;
    std::size_t n = 100;
    std::uint64_t seed = 0;
    dre::GaussianPairSpec pair;
};

struct KernelOptions {
    std::string family = "one_plus_gaussian";
    double bandwidth = 1.0;
};

void add_data_options(CLI::App& cmd, DataOptions& o) {
    cmd.add_option("--p-csv", o.p_csv, "CSV of samples from the numerator density (header x_1,...,x_d)");
    cmd.add_option("--q-csv", o.q_csv, "CSV of samples from the denominator density");
    cmd.add_flag("--synthetic", o.synthetic, "Draw data from the Gaussian pair instead of CSV files");
    cmd.add_option("--m", o.m, "Synthetic: number of numerator samples")->capture_default_str();
    cmd.add_option("--n", o.n, "Synthetic: number of denominator samples")->capture_default_str();
    cmd.add_option("--seed", o.seed, "Synthetic: random seed")->capture_default_str();
    cmd.add_option("--mu-p", o.pair.mu_p, "Synthetic: numerator mean")->capture_default_str();
    cmd.add_option("--sigma-p", o.pair.sigma_p, "Synthetic: numerator standard deviation")->capture_default_str();
    cmd.add_option("--mu-q", o.pair.mu_q, "Synthetic: denominator mean")->capture_default_str();
    cmd.add_option("--sigma-q", o.pair.sigma_q, "Synthetic: denominator standard deviation")->capture_default_str();
}

void add_kernel_options(CLI::App& cmd, KernelOptions& o) {
    cmd.add_option("--kernel", o.family, "one_plus_gaussian or gaussian")->capture_default_str();
    cmd.add_option("--bandwidth", o.bandwidth, "Gaussian bandwidth sigma")->capture_default_str();
}

dre::KernelSpec make_kernel(const KernelOptions& o) {
    dre::KernelSpec spec;
    spec.family = dre::parse_kernel_family(o.family);
    spec.bandwidth = o.bandwidth;
    spec.validate();
    return spec;
}

dre::LabeledDataset load_data(const DataOptions& o) {
    const bool have_csv = !o.p_csv.empty() || !o.q_csv.empty();
    if (o.synthetic && have_csv) throw dre::InputError("use either --synthetic or --p-csv/--q-csv, not both");
    if (o.synthetic) return dre::sample_pair(o.pair, o.m, o.n, o.seed);
    if (o.p_csv.empty() || o.q_csv.empty()) {
        throw dre::InputError("a data source is required: --synthetic or both --p-csv and --q-csv");
    }
    return dre::load_two_csv(o.p_csv, o.q_csv);
}

ordered_json data_config(const DataOptions& o, const dre::LabeledDataset& data) {
    ordered_json doc;
    if (o.synthetic) {
        doc["source"] = "synthetic";
        doc["mu_p"] = o.pair.mu_p;
        doc["sigma_p"] = o.pair.sigma_p;
        doc["mu_q"] = o.pair.mu_q;
        doc["sigma_q"] = o.pair.sigma_q;
        doc["seed"] = o.seed;
    } else {
        doc["source"] = "csv";
        doc["p_csv"] = o.p_csv;
        doc["q_csv"] = o.q_csv;
    }
    doc["m"] = data.m;
    doc["n"] = data.n;
    doc["dim"] = data.dim();
    doc["dataset_hash"] = dre::dataset_hash(data);
    return doc;
}

ordered_json kernel_config(const dre::KernelSpec& kernel) {
    ordered_json doc;
    doc["family"] = dre::to_string(kernel.family);
    doc["bandwidth"] = kernel.bandwidth;
    return doc;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw dre::InputError(path.string() + ": cannot open for writing");
    out << text;
    if (!out) throw dre::InputError(path.string() + ": write failed");
}

struct FitCommand {
    DataOptions data;
    KernelOptions kernel;
    std::string loss;
    double lambda = 0.0;
    std::string out = "model.json";
    int max_iters = 5000;
    std::optional<double> tol;
    bool no_closed_form = false;

    int run() const {
        const auto ds = load_data(data);
        const auto spec = make_kernel(kernel);
        const auto family = dre::parse_loss_kind(loss);
        dre::FitOptions opts;
        opts.max_iters = max_iters;
        opts.tol_grad = tol;
        opts.closed_form = !no_closed_form;
        auto result = dre::fit(family, spec, ds, lambda, opts);
        result.model.seed = data.synthetic ? data.seed : 0;
        write_text(out, dre::model_to_json(result.model).dump(2) + "\n");
        ordered_json doc = dre::report_to_json(result.report);
        doc["loss"] = dre::to_string(family);
        doc["lambda"] = lambda;
        doc["kernel"] = kernel_config(spec);
        doc["data"] = data_config(data, ds);
        doc["model_file"] = out;
        std::cout << doc.dump(2) << '\n';
        if (!result.report.converged) {
            std::cerr << "error: solver did not reach the gradient tolerance within " << max_iters << " iterations\n";
            return kExitNumerical;
        }
        return 0;
    }
};

void add_rule_options(CLI::App& cmd, std::string& rule, dre::RuleParams& params, std::string& trace,
                      const char* rule_flag, bool with_alpha = true) {
    cmd.add_option(rule_flag, rule, "Selection rule: mj or eta-s")->capture_default_str();
    cmd.add_option("--delta", params.consts.delta, "Confidence level for eta-s")->capture_default_str();
    cmd.add_option("--q0", params.consts.Q0, "Capacity constant Q0 for eta-s")->capture_default_str();
    if (with_alpha) {
        cmd.add_option("--alpha", params.consts.alpha_cap, "Capacity exponent for eta-s")->capture_default_str();
    }
    cmd.add_option("--threshold-scale", params.threshold_scale, "Multiply every threshold")->capture_default_str();
    cmd.add_option("--trace", trace, "Trace used by mj: finite-rank or span")->capture_default_str();
}

struct SelectCommand {
    DataOptions data;
    KernelOptions kernel;
    std::string loss;
    std::string grid = "1e-3:10:5";
    std::string rule = "mj";
    std::string trace = "finite-rank";
    dre::RuleParams params;
    std::string out = "selection.json";

    int run() {
        const auto ds = load_data(data);
        const auto spec = make_kernel(kernel);
        const auto family = dre::parse_loss_kind(loss);
        const auto lambda_grid = dre::LambdaGrid::parse(grid);
        const auto sel_rule = dre::parse_selection_rule(rule);
        params.trace = dre::parse_trace_convention(trace);
        if (sel_rule == dre::SelectionRule::TheoreticalEtaS) params.consts.validate();
        const auto report = dre::select_lambda(ds, family, spec, lambda_grid, sel_rule, params);
        ordered_json doc;
        ordered_json cfg;
        cfg["loss"] = dre::to_string(family);
        cfg["grid"] = grid;
        cfg["kernel"] = kernel_config(spec);
        cfg["data"] = data_config(data, ds);
        doc["config"] = std::move(cfg);
        doc["selection"] = dre::selection_to_json(report);
        write_text(out, doc.dump(2) + "\n");
        std::cout << dre::format_double(report.chosen_lambda) << '\n';
        return 0;
    }
};

struct ExperimentCommand {
    std::string config_path;
    std::string output_dir;
    unsigned threads = 0;
    bool bregman = false;

    int run() const {
        auto config = dre::load_experiment_config(config_path);
        if (!output_dir.empty()) config.output_dir = output_dir;
        if (threads != 0) config.threads = threads;
        if (bregman) config.bregman = true;
        const auto report = dre::run_experiment(config);
        write_text(config.output_dir / "experiment_report.json", dre::experiment_report_to_json(report).dump(2) + "\n");
        write_text(config.output_dir / "experiment.csv", dre::experiment_csv(report));
        for (auto loss : config.losses) {
            for (const auto& size : config.sample_sizes) {
                std::cout << dre::to_string(loss) << " m=" << size.m << " n=" << size.n
                          << " top2_fraction=" << dre::format_double(dre::top_rank_fraction(report, loss, size, 2))
                          << '\n';
            }
        }
        return 0;
    }
};

struct RateSweepCommand {
    std::string loss = "kulsif";
    std::vector<std::size_t> sizes{32, 64, 128, 256, 512};
    std::size_t seeds = 21;
    std::uint64_t first_seed = 0;
    std::string rule = "mj";
    std::string trace = "finite-rank";
    dre::RuleParams params;
    std::string grid = "1e-3:10:5";
    KernelOptions kernel;
    double r = 0.5;
    double alpha = 1.0;
    std::string out_csv = "rate_sweep.csv";
    std::string out_json;
    unsigned threads = 0;

    int run() {
        dre::RateSweepConfig config;
        config.loss = dre::parse_loss_kind(loss);
        config.sizes = sizes;
        config.seed_count = seeds;
        config.first_seed = first_seed;
        config.rule = dre::parse_selection_rule(rule);
        params.trace = dre::parse_trace_convention(trace);
        params.consts.alpha_cap = alpha;
        params.consts.r = r;
        config.params = params;
        config.grid = dre::LambdaGrid::parse(grid);
        config.kernel = make_kernel(kernel);
        config.r = r;
        config.alpha = alpha;
        config.threads = threads;
        const auto result = dre::run_rate_sweep(config);
        write_text(out_csv, dre::rate_sweep_csv(result));
        if (!out_json.empty()) write_text(out_json, dre::rate_sweep_to_json(result).dump(2) + "\n");
        std::cout << "slope=" << (result.slope ? dre::format_double(*result.slope) : std::string("null")) << '\n';
        std::cout << "theoretical_exponent=" << dre::format_double(result.theoretical_exponent) << '\n';
        return 0;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive density ratio estimation with kernel methods"};
    app.require_subcommand(1);

    FitCommand fit_cmd;
    auto* fit = app.add_subcommand("fit", "Fit a ratio model at one regularization value");
    add_data_options(*fit, fit_cmd.data);
    add_kernel_options(*fit, fit_cmd.kernel);
    fit->add_option("--loss", fit_cmd.loss, "kulsif, lr, exp or sq")->required();
    fit->add_option("--lambda", fit_cmd.lambda, "Regularization parameter")->required();
    fit->add_option("--out", fit_cmd.out, "Model JSON output path")->capture_default_str();
    fit->add_option("--max-iters", fit_cmd.max_iters, "Conjugate gradient iteration cap")->capture_default_str();
    fit->add_option("--tol", fit_cmd.tol, "Gradient norm tolerance (default 1e-8 * N)");
    fit->add_flag("--no-closed-form", fit_cmd.no_closed_form, "Use conjugate gradient for kulsif and sq too");

    SelectCommand select_cmd;
    auto* select = app.add_subcommand("select", "Choose the regularization value by the balancing principle");
    add_data_options(*select, select_cmd.data);
    add_kernel_options(*select, select_cmd.kernel);
    select->add_option("--loss", select_cmd.loss, "kulsif, lr, exp or sq")->required();
    select->add_option("--grid", select_cmd.grid, "first:ratio:count")->capture_default_str();
    add_rule_options(*select, select_cmd.rule, select_cmd.params, select_cmd.trace, "--rule");
    select->add_option("--out", select_cmd.out, "Selection report JSON path")->capture_default_str();

    ExperimentCommand experiment_cmd;
    auto* experiment = app.add_subcommand("experiment", "Run the synthetic Gaussian-pair experiment");
    experiment->add_option("config", experiment_cmd.config_path, "Experiment config JSON")->required();
    experiment->add_option("--output-dir", experiment_cmd.output_dir, "Override the config's output_dir");
    experiment->add_option("--threads", experiment_cmd.threads, "Worker threads (0 = hardware)");
    experiment->add_flag("--bregman", experiment_cmd.bregman, "Also compute Bregman errors per fit");

    RateSweepCommand sweep_cmd;
    auto* sweep = app.add_subcommand("rate-sweep", "Median Bregman error at the selected lambda versus sample size");
    sweep->add_option("--loss", sweep_cmd.loss, "kulsif, lr, exp or sq")->capture_default_str();
    sweep->add_option("--sizes", sweep_cmd.sizes, "Total sample sizes N (m = N/2)")
        ->delimiter(',')
        ->capture_default_str();
    sweep->add_option("--seeds", sweep_cmd.seeds, "Number of seeds per size")->capture_default_str();
    sweep->add_option("--first-seed", sweep_cmd.first_seed, "First seed")->capture_default_str();
    add_rule_options(*sweep, sweep_cmd.rule, sweep_cmd.params, sweep_cmd.trace, "--selection", false);
    sweep->add_option("--grid", sweep_cmd.grid, "first:ratio:count")->capture_default_str();
    add_kernel_options(*sweep, sweep_cmd.kernel);
    sweep->add_option("--r", sweep_cmd.r, "Source exponent for the printed theoretical rate")->capture_default_str();
    sweep->add_option("--alpha", sweep_cmd.alpha, "Capacity exponent (eta-s rule and printed theoretical rate)")
        ->capture_default_str();
    sweep->add_option("--out-csv", sweep_cmd.out_csv, "CSV output path")->capture_default_str();
    sweep->add_option("--out-json", sweep_cmd.out_json, "Optional JSON output path");
    sweep->add_option("--threads", sweep_cmd.threads, "Worker threads (0 = hardware)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n";
        const CLI::App* target = &app;
        for (const auto* sub : app.get_subcommands()) target = sub;
        std::cerr << target->help();
        return kExitInput;
    }

    try {
        if (fit->parsed()) return fit_cmd.run();
        if (select->parsed()) return select_cmd.run();
        if (experiment->parsed()) return experiment_cmd.run();
        if (sweep->parsed()) return sweep_cmd.run();
    } catch (const dre::InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const dre::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumerical;
    }
    return kExitInput;
}
