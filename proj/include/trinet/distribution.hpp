#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "trinet/error.hpp"

namespace trinet {

inline constexpr int kOutcomes = 4;
inline constexpr int kCells = kOutcomes * kOutcomes * kOutcomes;

/// Flat index of outcome triple (a, b, c), 0-based.
constexpr int cell_index(int a, int b, int c) { return 16 * a + 4 * b + c; }

struct OutcomeTriple {
    int a, b, c;
};

constexpr OutcomeTriple cell_triple(int index) { return {index / 16, (index / 4) % 4, index % 4}; }

/// Joint outcome distribution P(a,b,c) of the three triangle parties.
///
/// Outcomes are 0-based in the API and 1-based in every human-facing format
/// (CSV labels, CLI summaries). Instances always satisfy: entries in [0,1],
/// total mass 1 within 1e-9.
class TriangleDistribution {
public:
    using Table = std::array<double, kCells>;

    static constexpr double kSumTolerance = 1e-9;

    /// Validating constructor.
    static TriangleDistribution from_table(const Table& p) {
        double sum = 0.0;
        for (int i = 0; i < kCells; ++i) {
            const double v = p[i];
            if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
                const auto t = cell_triple(i);
                std::ostringstream os;
                os << "probability at (" << t.a + 1 << "," << t.b + 1 << "," << t.c + 1 << ") = " << v
                   << " is outside [0,1]";
                throw ValidationError(os.str());
            }
            sum += v;
        }
        if (std::abs(sum - 1.0) > kSumTolerance) {
            std::ostringstream os;
            os << std::setprecision(17) << "probabilities sum to " << sum << ", expected 1";
            throw ValidationError(os.str());
        }
        return TriangleDistribution(p);
    }

    static TriangleDistribution from_vector(const std::vector<double>& p) {
        if (p.size() != static_cast<std::size_t>(kCells)) {
            throw ValidationError("expected 64 probabilities, got " + std::to_string(p.size()));
        }
        Table t{};
        std::copy(p.begin(), p.end(), t.begin());
        return from_table(t);
    }

    static TriangleDistribution uniform() {
        Table t;
        t.fill(1.0 / kCells);
        return TriangleDistribution(t);
    }

    /// All mass on a single outcome triple.
    static TriangleDistribution deterministic(int a, int b, int c) {
        Table t{};
        t[cell_index(a, b, c)] = 1.0;
        return TriangleDistribution(t);
    }

    double operator()(int a, int b, int c) const { return p_[cell_index(a, b, c)]; }
    double operator[](int index) const { return p_[index]; }
    const Table& table() const { return p_; }

    double sum() const {
        double s = 0.0;
        for (double v : p_) s += v;
        return s;
    }

    /// Marginal of a single party (0 = A, 1 = B, 2 = C).
    std::array<double, kOutcomes> marginal(int party) const {
        std::array<double, kOutcomes> m{};
        for (int i = 0; i < kCells; ++i) {
            const auto t = cell_triple(i);
            const int k = party == 0 ? t.a : (party == 1 ? t.b : t.c);
            m[k] += p_[i];
        }
        return m;
    }

    /// Distribution of (x_{perm[0]}, x_{perm[1]}, x_{perm[2]}), i.e. the
    /// parties reordered so that new party j is old party perm[j].
    TriangleDistribution permute_parties(const std::array<int, 3>& perm) const {
        Table t{};
        for (int i = 0; i < kCells; ++i) {
            const auto o = cell_triple(i);
            const std::array<int, 3> old{o.a, o.b, o.c};
            t[cell_index(old[perm[0]], old[perm[1]], old[perm[2]])] = p_[i];
        }
        return TriangleDistribution(t);
    }

    /// Applies the same outcome relabeling k -> relabel[k] to every party.
    TriangleDistribution relabel_outcomes(const std::array<int, kOutcomes>& relabel) const {
        Table t{};
        for (int i = 0; i < kCells; ++i) {
            const auto o = cell_triple(i);
            t[cell_index(relabel[o.a], relabel[o.b], relabel[o.c])] = p_[i];
        }
        return TriangleDistribution(t);
    }

    /// Convex combination lambda * this + (1 - lambda) * other.
    TriangleDistribution mix(const TriangleDistribution& other, double lambda) const {
        Table t;
        for (int i = 0; i < kCells; ++i) t[i] = lambda * p_[i] + (1.0 - lambda) * other.p_[i];
        return from_table(t);
    }

    friend bool operator==(const TriangleDistribution&, const TriangleDistribution&) = default;

private:
    explicit TriangleDistribution(const Table& p) : p_(p) {}

    Table p_;
};

/// Euclidean distance over the 64 entries.
inline double distance(const TriangleDistribution& p, const TriangleDistribution& q) {
    double s = 0.0;
    for (int i = 0; i < kCells; ++i) {
        const double d = p[i] - q[i];
        s += d * d;
    }
    return std::sqrt(s);
}

inline double max_abs_difference(const TriangleDistribution& p, const TriangleDistribution& q) {
    double m = 0.0;
    for (int i = 0; i < kCells; ++i) m = std::max(m, std::abs(p[i] - q[i]));
    return m;
}

// --- serialization --------------------------------------------------------

inline nlohmann::json to_json(const TriangleDistribution& p) {
    nlohmann::json j;
    j["outcomes"] = kOutcomes;
    j["p"] = std::vector<double>(p.table().begin(), p.table().end());
    return j;
}

inline TriangleDistribution distribution_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("p")) {
        throw ValidationError("distribution JSON must be an object with a \"p\" array");
    }
    if (j.contains("outcomes") && j.at("outcomes") != kOutcomes) {
        throw ValidationError("only 4-outcome distributions are supported");
    }
    const auto& arr = j.at("p");
    if (!arr.is_array()) throw ValidationError("\"p\" must be an array");
    std::vector<double> v;
    v.reserve(arr.size());
    for (const auto& x : arr) {
        if (!x.is_number()) throw ValidationError("\"p\" entries must be numbers");
        v.push_back(x.get<double>());
    }
    return TriangleDistribution::from_vector(v);
}

/// CSV with header `a,b,c,p` and 1-based labels, 17 significant digits.
inline void write_csv(std::ostream& os, const TriangleDistribution& p) {
    os << "a,b,c,p\n";
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (int i = 0; i < kCells; ++i) {
        const auto t = cell_triple(i);
        os << t.a + 1 << ',' << t.b + 1 << ',' << t.c + 1 << ',' << p[i] << '\n';
    }
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) {
        const auto b = field.find_first_not_of(" \t\r");
        const auto e = field.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? std::string() : field.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline std::string line_error(std::size_t line_no, const std::string& msg) {
    return "line " + std::to_string(line_no) + ": " + msg;
}

inline int parse_label(const std::string& s, std::size_t line_no) {
    if (s.size() != 1 || s[0] < '1' || s[0] > '4') {
        throw ValidationError(line_error(line_no, "outcome label '" + s + "' is not one of 1,2,3,4"));
    }
    return s[0] - '1';
}

inline double parse_double(const std::string& s, std::size_t line_no) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw ValidationError(line_error(line_no, "'" + s + "' is not a number"));
    }
    if (used != s.size()) throw ValidationError(line_error(line_no, "'" + s + "' is not a number"));
    return v;
}

/// Reads `a,b,c,<value>` rows after the expected header, requiring every
/// cell exactly once.
template <typename Parse>
void read_cell_csv(std::istream& is, const std::string& value_column, Parse&& on_value) {
    std::string line;
    std::size_t line_no = 0;
    bool header = false;
    std::array<bool, kCells> seen{};
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        const auto f = split_csv_line(line);
        if (!header) {
            if (f.size() != 4 || f[0] != "a" || f[1] != "b" || f[2] != "c" || f[3] != value_column) {
                throw ValidationError(line_error(line_no, "expected header 'a,b,c," + value_column + "'"));
            }
            header = true;
            continue;
        }
        if (f.size() != 4) throw ValidationError(line_error(line_no, "expected 4 fields"));
        const int idx = cell_index(parse_label(f[0], line_no), parse_label(f[1], line_no),
                                   parse_label(f[2], line_no));
        if (seen[idx]) throw ValidationError(line_error(line_no, "duplicate outcome triple"));
        seen[idx] = true;
        on_value(idx, f[3], line_no);
    }
    if (!header) throw ValidationError("empty CSV input");
    for (int i = 0; i < kCells; ++i) {
        if (!seen[i]) {
            const auto t = cell_triple(i);
            throw ValidationError("missing outcome triple (" + std::to_string(t.a + 1) + "," +
                                  std::to_string(t.b + 1) + "," + std::to_string(t.c + 1) + ")");
        }
    }
}

}  // namespace detail

inline TriangleDistribution read_distribution_csv(std::istream& is) {
    TriangleDistribution::Table t{};
    detail::read_cell_csv(is, "p", [&](int idx, const std::string& v, std::size_t line_no) {
        t[idx] = detail::parse_double(v, line_no);
    });
    return TriangleDistribution::from_table(t);
}

}  // namespace trinet
