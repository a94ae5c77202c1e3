#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dre/data.hpp"
#include "dre/errors.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

using namespace dre;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("dre_data_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::filesystem::path write(const std::string& name, const std::string& text) const {
        const auto p = path / name;
        std::ofstream(p) << text;
        return p;
    }
};

}  // namespace

TEST_CASE("sampling layout and labels") {
    const GaussianPairSpec pair{};
    const auto only_q = sample_pair(pair, 0, 5, 3);
    CHECK(only_q.size() == 5);
    CHECK(only_q.m == 0);
    CHECK(only_q.n == 5);
    for (int y : only_q.ys) CHECK(y == -1);

    const auto mixed = sample_pair(pair, 4, 6, 3);
    REQUIRE(mixed.size() == 10);
    for (std::size_t i = 0; i < 4; ++i) CHECK(mixed.ys[i] == 1);
    for (std::size_t i = 4; i < 10; ++i) CHECK(mixed.ys[i] == -1);
    CHECK_NOTHROW(mixed.validate());
}

TEST_CASE("sampling is deterministic per seed") {
    const GaussianPairSpec pair{};
    const auto a = sample_pair(pair, 3, 3, 42);
    const auto b = sample_pair(pair, 3, 3, 42);
    const auto c = sample_pair(pair, 3, 3, 43);
    CHECK(a.xs == b.xs);
    CHECK(a.ys == b.ys);
    CHECK(dataset_hash(a) == dataset_hash(b));
    CHECK_FALSE(a.xs == c.xs);
    CHECK(dataset_hash(a) != dataset_hash(c));
}

TEST_CASE("large samples have the right moments") {
    const GaussianPairSpec pair{};
    const std::size_t m = 100000;
    const auto data = sample_pair(pair, m, m, 9);
    const Eigen::VectorXd p = data.xs.col(0).head(static_cast<Eigen::Index>(m));
    const Eigen::VectorXd q = data.xs.col(0).tail(static_cast<Eigen::Index>(m));
    const double root_m = std::sqrt(static_cast<double>(m));
    CHECK(std::abs(p.mean() - 4.0) <= 3.0 * pair.sigma_p / root_m);
    CHECK(std::abs(q.mean() - 2.0) <= 3.0 * pair.sigma_q / root_m);
    const double var_p = (p.array() - p.mean()).square().sum() / static_cast<double>(m - 1);
    CHECK(var_p == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("normal stream is reproducible and standard") {
    NormalStream a(1);
    NormalStream b(1);
    double sum = 0.0;
    double sq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double x = a.next();
        CHECK(x == b.next());
        sum += x;
        sq += x * x;
    }
    CHECK(std::abs(sum / n) < 0.01);
    CHECK(sq / n == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("invalid specs and datasets") {
    CHECK_THROWS_AS(sample_pair(GaussianPairSpec{4.0, 0.0, 2.0, 1.0}, 1, 1, 0), InputError);
    CHECK_THROWS_AS(sample_pair(GaussianPairSpec{}, 3, 0, 0), InputError);
    LabeledDataset bad = sample_pair(GaussianPairSpec{}, 2, 2, 0);
    bad.ys[0] = 0;
    CHECK_THROWS_AS(bad.validate(), InputError);
    LabeledDataset counts = sample_pair(GaussianPairSpec{}, 2, 2, 0);
    counts.m = 3;
    CHECK_THROWS_AS(counts.validate(), InputError);
}

TEST_CASE("two-file CSV ingestion") {
    TempDir dir;
    const auto p = dir.write("p.csv", "x_1\n1.5\n2.5\n");
    const auto q = dir.write("q.csv", "x_1\n-1\n0\n3e-1\n");
    const auto data = load_two_csv(p, q);
    CHECK(data.m == 2);
    CHECK(data.n == 3);
    CHECK(data.dim() == 1);
    CHECK(data.xs(1, 0) == 2.5);
    CHECK(data.xs(4, 0) == doctest::Approx(0.3));
    CHECK(data.ys == std::vector<int>{1, 1, -1, -1, -1});

    const auto p2 = dir.write("p2.csv", "x_1,x_2\n1,2\n3,4\n");
    const auto q2 = dir.write("q2.csv", "x_1,x_2\n5,6\n");
    const auto data2 = load_two_csv(p2, q2);
    CHECK(data2.dim() == 2);
    CHECK(data2.xs(2, 1) == 6.0);
}

TEST_CASE("CSV errors name the file and line") {
    TempDir dir;
    const auto p = dir.write("p.csv", "x_1\n1\n");
    const auto q = dir.write("q.csv", "x_1\n1\n2\nabc\n");
    try {
        (void)load_two_csv(p, q);
        FAIL("expected an error");
    } catch (const InputError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("q.csv") != std::string::npos);
        CHECK(msg.find(":4") != std::string::npos);
    }

    CHECK_THROWS_AS((void)load_two_csv(dir.path / "missing.csv", q), InputError);
    const auto no_header = dir.write("nh.csv", "1\n2\n");
    CHECK_THROWS_AS((void)load_two_csv(no_header, p), InputError);
    const auto wide = dir.write("w.csv", "x_1,x_2\n1,2\n");
    CHECK_THROWS_AS((void)load_two_csv(wide, p), InputError);
    const auto ragged = dir.write("r.csv", "x_1,x_2\n1,2\n3\n");
    CHECK_THROWS_AS((void)load_two_csv(ragged, wide), InputError);
    const auto empty_q = dir.write("e.csv", "x_1\n");
    CHECK_THROWS_AS((void)load_two_csv(p, empty_q), InputError);
}
