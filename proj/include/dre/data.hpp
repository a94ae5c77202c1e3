#pragma once

#include "dre/kernel.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

namespace dre {

/// Two univariate Gaussians: P = N(mu_p, sigma_p^2), Q = N(mu_q, sigma_q^2).
struct GaussianPairSpec {
    double mu_p = 4.0;
    double sigma_p = 0.70710678118654752440;  // 1/sqrt(2)
    double mu_q = 2.0;
    double sigma_q = 2.23606797749978969641;  // sqrt(5)

    void validate() const;
};

/// Standard normal variates by Box-Muller over a mt19937_64 stream.
class NormalStream {
public:
    explicit NormalStream(std::uint64_t seed);
    double next();
    /// Uniform on [0, 1) with 53 random bits.
    double uniform();

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Pooled two-sample data: P-samples carry label +1, Q-samples label -1.
struct LabeledDataset {
    PointMatrix xs;
    std::vector<int> ys;
    std::size_t m = 0;  ///< number of +1 labels
    std::size_t n = 0;  ///< number of -1 labels

    [[nodiscard]] std::size_t size() const noexcept { return ys.size(); }
    [[nodiscard]] Eigen::Index dim() const noexcept { return xs.cols(); }
    /// Throws InputError if counts, labels or shapes are inconsistent, or n == 0.
    void validate() const;
};

/// m draws from P then n draws from Q, from one mt19937_64 stream seeded with
/// `seed`. Normal variates use the Box-Muller transform.
[[nodiscard]] LabeledDataset sample_pair(const GaussianPairSpec& spec, std::size_t m, std::size_t n,
                                         std::uint64_t seed);

/// Reads P-samples and Q-samples from CSV files with header x_1,...,x_d.
[[nodiscard]] LabeledDataset load_two_csv(const std::filesystem::path& path_p,
                                          const std::filesystem::path& path_q);

/// FNV-1a over the labels and the raw bytes of the points.
[[nodiscard]] std::uint64_t dataset_hash(const LabeledDataset& data);

}  // namespace dre
