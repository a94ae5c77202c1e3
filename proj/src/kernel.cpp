#include "dre/kernel.hpp"

#include "dre/errors.hpp"

#include <cmath>

namespace dre {

namespace {

double from_squared_distance(const KernelSpec& spec, double d2) {
    const double g = std::exp(-d2 / (2.0 * spec.bandwidth * spec.bandwidth));
    return spec.family == KernelFamily::OnePlusGaussian ? 1.0 + g : g;
}

double squared_distance(const double* a, const double* b, Eigen::Index d) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) {
        const double diff = a[k] - b[k];
        s += diff * diff;
    }
    return s;
}

}  // namespace

void KernelSpec::validate() const {
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
        throw InputError("kernel bandwidth must be positive and finite, got " +
                         std::to_string(bandwidth));
    }
}

std::string to_string(KernelFamily family) {
    return family == KernelFamily::OnePlusGaussian ? "one_plus_gaussian" : "gaussian";
}

KernelFamily parse_kernel_family(std::string_view name) {
    if (name == "one_plus_gaussian" || name == "one-plus-gaussian") return KernelFamily::OnePlusGaussian;
    if (name == "gaussian") return KernelFamily::Gaussian;
    throw InputError("unknown kernel family '" + std::string(name) +
                     "' (expected one_plus_gaussian or gaussian)");
}

double kernel_eval(const KernelSpec& spec, std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw InputError("kernel_eval: dimension mismatch (" + std::to_string(x.size()) + " vs " +
                         std::to_string(y.size()) + ")");
    }
    return from_squared_distance(
        spec, squared_distance(x.data(), y.data(), static_cast<Eigen::Index>(x.size())));
}

Eigen::MatrixXd gram_matrix(const KernelSpec& spec, const PointMatrix& points) {
    const Eigen::Index n = points.rows();
    if (n == 0) throw InputError("gram_matrix: empty point list");
    const Eigen::Index d = points.cols();
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        K(j, j) = spec.diagonal();
        for (Eigen::Index i = 0; i < j; ++i) {
            const double v =
                from_squared_distance(spec, squared_distance(points.row(i).data(), points.row(j).data(), d));
            K(i, j) = v;
            K(j, i) = v;
        }
    }
    return K;
}

Eigen::MatrixXd cross_kernel(const KernelSpec& spec, const PointMatrix& rows, const PointMatrix& cols) {
    if (rows.cols() != cols.cols()) {
        throw InputError("cross_kernel: dimension mismatch (" + std::to_string(rows.cols()) + " vs " +
                         std::to_string(cols.cols()) + ")");
    }
    const Eigen::Index d = rows.cols();
    Eigen::MatrixXd out(rows.rows(), cols.rows());
    const double scale = -1.0 / (2.0 * spec.bandwidth * spec.bandwidth);
    const double offset = spec.family == KernelFamily::OnePlusGaussian ? 1.0 : 0.0;
    if (d == 1) {
        // 1-D fast path: vectorized exp over a column at a time.
        const Eigen::ArrayXd r = rows.col(0).array();
        for (Eigen::Index j = 0; j < cols.rows(); ++j) {
            out.col(j) = offset + ((r - cols(j, 0)).square() * scale).exp();
        }
        return out;
    }
    for (Eigen::Index j = 0; j < cols.rows(); ++j) {
        for (Eigen::Index i = 0; i < rows.rows(); ++i) {
            out(i, j) = offset + std::exp(scale * squared_distance(rows.row(i).data(), cols.row(j).data(), d));
        }
    }
    return out;
}

}  // namespace dre
