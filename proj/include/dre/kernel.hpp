#pragma once

#include <Eigen/Dense>

#include <span>
#include <string>
#include <string_view>

namespace dre {

/// Sample points, one row per sample. Row-major so each row is contiguous.
using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class KernelFamily {
    OnePlusGaussian,  ///< 1 + exp(-|x-x'|^2 / (2 s^2))
    Gaussian,         ///< exp(-|x-x'|^2 / (2 s^2))
};

struct KernelSpec {
    KernelFamily family = KernelFamily::OnePlusGaussian;
    double bandwidth = 1.0;

    /// Throws InputError unless bandwidth is positive and finite.
    void validate() const;
    /// k(x, x) for this family.
    [[nodiscard]] double diagonal() const noexcept {
        return family == KernelFamily::OnePlusGaussian ? 2.0 : 1.0;
    }
};

[[nodiscard]] std::string to_string(KernelFamily family);
[[nodiscard]] KernelFamily parse_kernel_family(std::string_view name);

[[nodiscard]] double kernel_eval(const KernelSpec& spec, std::span<const double> x,
                                 std::span<const double> y);

/// Symmetric N x N Gram matrix. The upper triangle is evaluated and mirrored.
[[nodiscard]] Eigen::MatrixXd gram_matrix(const KernelSpec& spec, const PointMatrix& points);

/// Rectangular kernel matrix with entry (i, j) = k(rows_i, cols_j).
[[nodiscard]] Eigen::MatrixXd cross_kernel(const KernelSpec& spec, const PointMatrix& rows,
                                           const PointMatrix& cols);

}  // namespace dre
