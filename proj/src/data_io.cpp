#include "drport/data_io.hpp"

#include "drport/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace drport {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    std::string out(s.substr(first, last - first + 1));
    if (out.size() >= 2 && out.front() == '"' && out.back() == '"') {
        out = out.substr(1, out.size() - 2);
    }
    return out;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (const char c : line) {
        if (c == '"') {
            quoted = !quoted;
            cell += c;
        } else if (c == ',' && !quoted) {
            cells.push_back(trim(cell));
            cell.clear();
        } else {
            cell += c;
        }
    }
    cells.push_back(trim(cell));
    return cells;
}

bool parse_number(const std::string& s, double& out) {
    if (s.empty()) {
        return false;
    }
    const char* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && ptr == end && std::isfinite(out);
}

std::ifstream open(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::IoFailure, "cannot open " + path.string(), path.string());
    }
    return in;
}

} // namespace

ParsedReturns parse_returns_csv(std::istream& in) {
    std::string line;
    std::vector<std::string> header;
    while (header.empty() && std::getline(in, line)) {
        if (!trim(line).empty()) {
            header = split_csv(line);
        }
    }
    if (header.empty()) {
        throw Error(ErrorCode::EmptyFile, "return file is empty");
    }
    const int cols = static_cast<int>(header.size()) - 1;
    std::vector<std::string> periods;
    std::vector<std::vector<double>> rows;
    std::vector<bool> usable(std::max(cols, 0), true);
    while (std::getline(in, line)) {
        if (trim(line).empty()) {
            continue;
        }
        std::vector<std::string> cells = split_csv(line);
        cells.resize(header.size());
        periods.push_back(cells[0]);
        std::vector<double> row(cols, std::nan(""));
        for (int j = 0; j < cols; ++j) {
            if (!parse_number(cells[j + 1], row[j])) {
                usable[j] = false;
            }
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) {
        throw Error(ErrorCode::EmptyFile, "return file has no data rows");
    }
    ParsedReturns out;
    std::vector<int> keep;
    for (int j = 0; j < cols; ++j) {
        if (usable[j]) {
            keep.push_back(j);
            out.returns.labels.push_back(header[j + 1]);
        } else {
            out.dropped_labels.push_back(header[j + 1]);
        }
    }
    out.dropped = static_cast<int>(out.dropped_labels.size());
    if (keep.empty()) {
        throw Error(ErrorCode::NoUsableColumns, "every return column has missing values");
    }
    out.returns.values.resize(static_cast<int>(rows.size()), static_cast<int>(keep.size()));
    for (std::size_t m = 0; m < rows.size(); ++m) {
        for (std::size_t j = 0; j < keep.size(); ++j) {
            out.returns.values(static_cast<int>(m), static_cast<int>(j)) = rows[m][keep[j]];
        }
    }
    out.returns.periods = std::move(periods);
    return out;
}

ParsedReturns parse_returns_csv(const std::filesystem::path& path) {
    std::ifstream in = open(path);
    return parse_returns_csv(in);
}

Moments parse_orlibrary(std::istream& in, double mean_scale, double cov_scale) {
    int n = 0;
    if (!(in >> n) || n < 1) {
        throw Error(ErrorCode::MalformedHeader, "first token must be a positive asset count");
    }
    Vector mean(n);
    Vector sd(n);
    for (int i = 0; i < n; ++i) {
        if (!(in >> mean(i) >> sd(i)) || !(sd(i) >= 0.0)) {
            throw Error(ErrorCode::MalformedHeader, "expected mean and standard deviation for asset " +
                                                        std::to_string(i + 1));
        }
    }
    std::map<std::pair<int, int>, double> upper;
    std::map<std::pair<int, int>, double> lower;
    int i = 0;
    int j = 0;
    double rho = 0.0;
    while (in >> i >> j >> rho) {
        if (i < 1 || j < 1 || i > n || j > n) {
            throw Error(ErrorCode::MalformedHeader, "correlation index out of range",
                        std::to_string(i) + " " + std::to_string(j));
        }
        if (std::abs(rho) > 1.0 + 1e-12) {
            throw Error(ErrorCode::CorrelationOutOfRange, "correlation outside [-1, 1]",
                        std::to_string(i) + " " + std::to_string(j));
        }
        if (i == j) {
            if (std::abs(rho - 1.0) > 1e-9) {
                throw Error(ErrorCode::CorrelationConflict, "diagonal correlation must be 1", std::to_string(i));
            }
            continue;
        }
        auto& table = i < j ? upper : lower;
        const std::pair<int, int> key{std::min(i, j) - 1, std::max(i, j) - 1};
        const auto [it, inserted] = table.emplace(key, rho);
        if (!inserted && std::abs(it->second - rho) > 1e-9) {
            throw Error(ErrorCode::CorrelationConflict, "pair listed twice with different values",
                        std::to_string(i) + " " + std::to_string(j));
        }
    }
    if (!in.eof()) {
        throw Error(ErrorCode::MalformedHeader, "unreadable correlation triplet");
    }
    Matrix cov(n, n);
    for (int a = 0; a < n; ++a) {
        cov(a, a) = cov_scale * sd(a) * sd(a);
        for (int b = a + 1; b < n; ++b) {
            const auto up = upper.find({a, b});
            const auto lo = lower.find({a, b});
            if (up == upper.end() && lo == lower.end()) {
                throw Error(ErrorCode::MissingCorrelation, "missing correlation",
                            std::to_string(a + 1) + " " + std::to_string(b + 1));
            }
            if (up != upper.end() && lo != lower.end() && std::abs(up->second - lo->second) > 1e-9) {
                throw Error(ErrorCode::CorrelationConflict, "both orientations listed with different values",
                            std::to_string(a + 1) + " " + std::to_string(b + 1));
            }
            const double r = up != upper.end() ? up->second : lo->second;
            cov(a, b) = cov(b, a) = cov_scale * r * sd(a) * sd(b);
        }
    }
    return Moments{mean_scale * mean, SymMatrix(cov)};
}

Moments parse_orlibrary(const std::filesystem::path& path, double mean_scale, double cov_scale) {
    std::ifstream in = open(path);
    return parse_orlibrary(in, mean_scale, cov_scale);
}

double gap_percent(double upper, double lower) {
    return 100.0 * (upper - lower) / std::max(std::abs(upper), 1e-12);
}

nlohmann::json result_to_json(const SolveResult& result, const std::vector<std::string>& labels) {
    nlohmann::json j;
    j["obj"] = result.objective;
    j["gap_pct"] = gap_percent(result.upper_bound, result.lower_bound);
    j["time_s"] = result.time_s;
    j["cuts"] = result.cuts;
    j["nodes"] = result.nodes;
    j["mode"] = std::string(to_string(result.mode));
    j["selection"] = result.selection.support();
    j["weights"] = std::vector<double>(result.x.data(), result.x.data() + result.x.size());
    j["lower_bound"] = result.lower_bound;
    j["upper_bound"] = result.upper_bound;
    j["iterations"] = result.iterations;
    j["status"] = std::string(to_string(result.reason));
    if (!labels.empty()) {
        std::vector<std::string> names;
        for (const int i : result.selection.support()) {
            names.push_back(labels.at(i));
        }
        j["selected_labels"] = names;
    }
    return j;
}

void write_result_json(const SolveResult& result, std::ostream& out, const std::vector<std::string>& labels) {
    out << result_to_json(result, labels).dump(2) << '\n';
    if (!out) {
        throw Error(ErrorCode::IoFailure, "failed to write result JSON");
    }
}

} // namespace drport
