#include "dre/data.hpp"

#include "dre/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

namespace dre {

NormalStream::NormalStream(std::uint64_t seed) : engine_(seed) {}

double NormalStream::next() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // u1 in (0,1], u2 in [0,1)
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

double NormalStream::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) fields.push_back(trim(field));
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

struct CsvBlock {
    std::vector<double> values;
    std::size_t rows = 0;
    std::size_t dim = 0;
};

CsvBlock read_block(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError(path.string() + ": cannot open file");
    const std::string where = path.string();

    std::string line;
    std::size_t line_no = 0;
    CsvBlock block;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
        if (trim(line).empty()) continue;
        const auto fields = split_commas(line);
        if (!have_header) {
            for (std::size_t k = 0; k < fields.size(); ++k) {
                if (fields[k] != "x_" + std::to_string(k + 1)) {
                    throw InputError(where + ":" + std::to_string(line_no) +
                                     ": header must be x_1,...,x_d (column " + std::to_string(k + 1) +
                                     " is '" + fields[k] + "')");
                }
            }
            block.dim = fields.size();
            have_header = true;
            continue;
        }
        if (fields.size() != block.dim) {
            throw InputError(where + ":" + std::to_string(line_no) + ": expected " + std::to_string(block.dim) +
                             " columns, found " + std::to_string(fields.size()));
        }
        for (std::size_t k = 0; k < fields.size(); ++k) {
            const std::string& f = fields[k];
            double value = 0.0;
            const auto* begin = f.data();
            const auto* end = f.data() + f.size();
            const auto [ptr, ec] = std::from_chars(begin, end, value);
            if (f.empty() || ec != std::errc() || ptr != end || !std::isfinite(value)) {
                throw InputError(where + ":" + std::to_string(line_no) + ": malformed number '" + f +
                                 "' in column " + std::to_string(k + 1));
            }
            block.values.push_back(value);
        }
        ++block.rows;
    }
    if (!have_header) throw InputError(where + ": missing header row x_1,...,x_d");
    return block;
}

}  // namespace

void GaussianPairSpec::validate() const {
    if (!(sigma_p > 0.0) || !(sigma_q > 0.0)) throw InputError("Gaussian pair: standard deviations must be positive");
    if (!std::isfinite(mu_p) || !std::isfinite(mu_q) || !std::isfinite(sigma_p) || !std::isfinite(sigma_q)) {
        throw InputError("Gaussian pair: parameters must be finite");
    }
}

void LabeledDataset::validate() const {
    if (static_cast<std::size_t>(xs.rows()) != ys.size()) throw InputError("dataset: point and label counts differ");
    if (m + n != ys.size()) throw InputError("dataset: m + n does not match the number of samples");
    if (n == 0) throw InputError("dataset: at least one Q-sample (label -1) is required");
    std::size_t pos = 0;
    for (int y : ys) {
        if (y == 1) {
            ++pos;
        } else if (y != -1) {
            throw InputError("dataset: labels must be +1 or -1");
        }
    }
    if (pos != m) throw InputError("dataset: label counts do not match m and n");
}

LabeledDataset sample_pair(const GaussianPairSpec& spec, std::size_t m, std::size_t n, std::uint64_t seed) {
    spec.validate();
    if (n == 0) throw InputError("sample_pair: n must be >= 1");
    LabeledDataset data;
    data.m = m;
    data.n = n;
    data.xs.resize(static_cast<Eigen::Index>(m + n), 1);
    data.ys.resize(m + n);
    NormalStream normal(seed);
    for (std::size_t i = 0; i < m; ++i) {
        data.xs(static_cast<Eigen::Index>(i), 0) = spec.mu_p + spec.sigma_p * normal.next();
        data.ys[i] = 1;
    }
    for (std::size_t i = m; i < m + n; ++i) {
        data.xs(static_cast<Eigen::Index>(i), 0) = spec.mu_q + spec.sigma_q * normal.next();
        data.ys[i] = -1;
    }
    return data;
}

LabeledDataset load_two_csv(const std::filesystem::path& path_p, const std::filesystem::path& path_q) {
    const CsvBlock p = read_block(path_p);
    const CsvBlock q = read_block(path_q);
    if (p.dim != q.dim) {
        throw InputError("inconsistent dimension: " + path_p.string() + " has " + std::to_string(p.dim) +
                         " columns, " + path_q.string() + " has " + std::to_string(q.dim));
    }
    if (q.rows == 0) throw InputError(path_q.string() + ": at least one Q-sample is required");
    LabeledDataset data;
    data.m = p.rows;
    data.n = q.rows;
    const auto total = static_cast<Eigen::Index>(p.rows + q.rows);
    const auto d = static_cast<Eigen::Index>(p.dim);
    data.xs.resize(total, d);
    std::copy(p.values.begin(), p.values.end(), data.xs.data());
    std::copy(q.values.begin(), q.values.end(), data.xs.data() + p.values.size());
    data.ys.assign(p.rows, 1);
    data.ys.insert(data.ys.end(), q.rows, -1);
    return data;
}

std::uint64_t dataset_hash(const LabeledDataset& data) {
    std::uint64_t h = 14695981039346656037ull;
    auto mix = [&h](const void* bytes, std::size_t len) {
        const auto* p = static_cast<const unsigned char*>(bytes);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= p[i];
            h *= 1099511628211ull;
        }
    };
    const std::uint64_t dims[2] = {static_cast<std::uint64_t>(data.xs.rows()),
                                   static_cast<std::uint64_t>(data.xs.cols())};
    mix(dims, sizeof(dims));
    mix(data.xs.data(), sizeof(double) * static_cast<std::size_t>(data.xs.size()));
    for (int y : data.ys) {
        const std::int32_t v = y;
        mix(&v, sizeof(v));
    }
    return h;
}

}  // namespace dre
