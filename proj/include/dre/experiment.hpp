#pragma once

#include "dre/adapt.hpp"
#include "dre/oracle.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dre {

struct SampleSize {
    std::size_t m = 0;
    std::size_t n = 0;
};

struct ExperimentConfig {
    GaussianPairSpec pair;
    std::vector<LossKind> losses;
    LambdaGrid grid;
    std::vector<SampleSize> sample_sizes;
    std::vector<std::uint64_t> seeds;
    SelectionRule rule = SelectionRule::PracticalMj;
    RuleParams params;
    KernelSpec kernel;
    std::filesystem::path output_dir = ".";
    /// Also compute the Bregman error of every grid fit (costs one quadrature pass per fit).
    bool bregman = false;
    /// Worker threads for the cells; 0 picks the hardware concurrency.
    unsigned threads = 0;

    void validate() const;
};

[[nodiscard]] ExperimentConfig experiment_config_from_json(const nlohmann::json& doc);
[[nodiscard]] ExperimentConfig load_experiment_config(const std::filesystem::path& path);
[[nodiscard]] nlohmann::ordered_json experiment_config_to_json(const ExperimentConfig& config);

struct LambdaOutcome {
    double lambda = 0.0;
    double mse = 0.0;
    std::optional<double> bregman;
    FitReport fit;
};

struct CellResult {
    LossKind loss = LossKind::KuLSIF;
    SampleSize size;
    std::uint64_t seed = 0;
    std::size_t chosen_index = 0;
    double chosen_lambda = 0.0;
    std::size_t rank = 0;  ///< 1-based position of the chosen lambda when the grid is ordered by MSE
    std::vector<LambdaOutcome> per_lambda;
    SelectionReport selection;
};

struct ExperimentReport {
    ExperimentConfig config;
    std::vector<CellResult> cells;  ///< ordered by loss, sample size, seed as listed in the config
};

/// 1 + number of entries strictly smaller than errors[index].
[[nodiscard]] std::size_t error_rank(const std::vector<double>& errors, std::size_t index);

[[nodiscard]] ExperimentReport run_experiment(const ExperimentConfig& config, const OracleContext& ctx);
[[nodiscard]] ExperimentReport run_experiment(const ExperimentConfig& config);

/// Fraction of cells for (loss, size) whose chosen lambda ranks at most `top`.
[[nodiscard]] double top_rank_fraction(const ExperimentReport& report, LossKind loss, SampleSize size,
                                       std::size_t top = 2);

[[nodiscard]] nlohmann::ordered_json experiment_report_to_json(const ExperimentReport& report);
/// Long format: loss,m,n,seed,lambda,mse,chosen,rank with one row per lambda per cell.
[[nodiscard]] std::string experiment_csv(const ExperimentReport& report);

struct RateSweepConfig {
    GaussianPairSpec pair;
    LossKind loss = LossKind::KuLSIF;
    std::vector<std::size_t> sizes;  ///< total N; m = N / 2, n = N - m
    std::size_t seed_count = 21;
    std::uint64_t first_seed = 0;
    SelectionRule rule = SelectionRule::PracticalMj;
    RuleParams params;
    LambdaGrid grid;
    KernelSpec kernel;
    double r = 0.5;
    double alpha = 1.0;
    unsigned threads = 0;

    void validate() const;
};

struct RatePoint {
    std::size_t N = 0;
    double median_error = 0.0;
    std::vector<double> errors;          ///< per seed
    std::vector<double> chosen_lambdas;  ///< per seed
};

struct RateSweepResult {
    RateSweepConfig config;
    std::vector<RatePoint> points;
    std::optional<double> slope;  ///< least-squares slope of log(median) on log(N); empty for < 2 sizes
    double theoretical_exponent = 0.0;
};

[[nodiscard]] RateSweepResult run_rate_sweep(const RateSweepConfig& config, const OracleContext& ctx);
[[nodiscard]] RateSweepResult run_rate_sweep(const RateSweepConfig& config);

[[nodiscard]] std::optional<double> loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys);
[[nodiscard]] double median(std::vector<double> values);

[[nodiscard]] nlohmann::ordered_json rate_sweep_to_json(const RateSweepResult& result);
/// N,median_error
[[nodiscard]] std::string rate_sweep_csv(const RateSweepResult& result);

/// Shortest decimal text that reads back to the same double.
[[nodiscard]] std::string format_double(double value);

}  // namespace dre
