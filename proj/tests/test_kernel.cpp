#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dre/errors.hpp"
#include "dre/kernel.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>
#include <vector>

using namespace dre;

namespace {

PointMatrix column(std::initializer_list<double> xs) {
    PointMatrix m(static_cast<Eigen::Index>(xs.size()), 1);
    Eigen::Index i = 0;
    for (double x : xs) m(i++, 0) = x;
    return m;
}

PointMatrix random_points(std::mt19937_64& rng, Eigen::Index n, Eigen::Index d) {
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    PointMatrix m(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) m(i, j) = u(rng);
    return m;
}

}  // namespace

TEST_CASE("kernel values at known points") {
    const KernelSpec standard{};
    const std::vector<double> zero{0.0};
    CHECK(kernel_eval(standard, zero, zero) == 2.0);

    const std::vector<double> a{4.0};
    const std::vector<double> b{2.0};
    CHECK(kernel_eval(standard, a, b) == doctest::Approx(1.0 + std::exp(-2.0)).epsilon(1e-15));
    CHECK(kernel_eval(standard, a, b) == doctest::Approx(1.1353353).epsilon(1e-7));

    const KernelSpec gauss{KernelFamily::Gaussian, 1.0};
    const std::vector<double> far{1000.0};
    CHECK(kernel_eval(gauss, zero, far) == doctest::Approx(0.0));
    CHECK(kernel_eval(gauss, zero, zero) == 1.0);
}

TEST_CASE("bandwidth scales the squared distance") {
    const KernelSpec wide{KernelFamily::Gaussian, 2.0};
    const std::vector<double> x{0.0, 0.0};
    const std::vector<double> y{3.0, 4.0};
    CHECK(kernel_eval(wide, x, y) == doctest::Approx(std::exp(-25.0 / 8.0)).epsilon(1e-14));
}

TEST_CASE("dimension mismatch and invalid specs are input errors") {
    const std::vector<double> one{1.0};
    const std::vector<double> two{1.0, 2.0};
    CHECK_THROWS_AS((void)kernel_eval(KernelSpec{}, one, two), InputError);
    CHECK_THROWS_AS(KernelSpec({KernelFamily::Gaussian, 0.0}).validate(), InputError);
    CHECK_THROWS_AS(KernelSpec({KernelFamily::Gaussian, -1.0}).validate(), InputError);
    CHECK_THROWS_AS((void)gram_matrix(KernelSpec{}, PointMatrix(0, 1)), InputError);
    CHECK_THROWS_AS((void)parse_kernel_family("laplace"), InputError);
    CHECK(parse_kernel_family(to_string(KernelFamily::Gaussian)) == KernelFamily::Gaussian);
    CHECK(parse_kernel_family(to_string(KernelFamily::OnePlusGaussian)) == KernelFamily::OnePlusGaussian);
}

TEST_CASE("small Gram matrices") {
    const Eigen::MatrixXd single = gram_matrix(KernelSpec{}, column({3.0}));
    REQUIRE(single.rows() == 1);
    CHECK(single(0, 0) == 2.0);

    const Eigen::MatrixXd two = gram_matrix(KernelSpec{}, column({4.0, 2.0}));
    CHECK(two(0, 0) == 2.0);
    CHECK(two(1, 1) == 2.0);
    CHECK(two(0, 1) == doctest::Approx(1.0 + std::exp(-2.0)).epsilon(1e-15));
    CHECK(two(1, 0) == two(0, 1));
}

TEST_CASE("symmetry, range and positive semidefiniteness on random points") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const Eigen::Index n = 1 + trial % 8;
        const Eigen::Index d = 1 + trial % 3;
        const PointMatrix pts = random_points(rng, n, d);
        for (auto family : {KernelFamily::OnePlusGaussian, KernelFamily::Gaussian}) {
            const KernelSpec spec{family, 0.5 + 0.1 * trial};
            const Eigen::MatrixXd K = gram_matrix(spec, pts);
            CHECK((K - K.transpose()).cwiseAbs().maxCoeff() == 0.0);
            for (Eigen::Index i = 0; i < n; ++i) {
                CHECK(K(i, i) == spec.diagonal());
                for (Eigen::Index j = 0; j < n; ++j) {
                    const std::span<const double> xi(pts.row(i).data(), static_cast<std::size_t>(d));
                    const std::span<const double> xj(pts.row(j).data(), static_cast<std::size_t>(d));
                    CHECK(kernel_eval(spec, xi, xj) == kernel_eval(spec, xj, xi));
                    if (family == KernelFamily::OnePlusGaussian) {
                        // 1 + exp(-d^2 / 2s^2); the exponential may underflow for distant points
                        const KernelSpec plain{KernelFamily::Gaussian, spec.bandwidth};
                        CHECK(K(i, j) == 1.0 + kernel_eval(plain, xi, xj));
                        CHECK(K(i, j) >= 1.0);
                        CHECK(K(i, j) <= 2.0);
                    } else {
                        CHECK(K(i, j) >= 0.0);
                        CHECK(K(i, j) <= 1.0);
                    }
                }
            }
            const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(K);
            CHECK(eig.eigenvalues().minCoeff() >= -1e-8 * static_cast<double>(n));
        }
    }
}

TEST_CASE("cross kernel agrees with pointwise evaluation") {
    std::mt19937_64 rng(5);
    for (Eigen::Index d : {1, 3}) {
        const PointMatrix rows = random_points(rng, 7, d);
        const PointMatrix cols = random_points(rng, 4, d);
        const KernelSpec spec{KernelFamily::OnePlusGaussian, 1.3};
        const Eigen::MatrixXd C = cross_kernel(spec, rows, cols);
        REQUIRE(C.rows() == 7);
        REQUIRE(C.cols() == 4);
        for (Eigen::Index i = 0; i < 7; ++i) {
            for (Eigen::Index j = 0; j < 4; ++j) {
                const std::span<const double> a(rows.row(i).data(), static_cast<std::size_t>(d));
                const std::span<const double> b(cols.row(j).data(), static_cast<std::size_t>(d));
                CHECK(C(i, j) == doctest::Approx(kernel_eval(spec, a, b)).epsilon(1e-14));
            }
        }
    }
}
