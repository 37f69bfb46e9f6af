#pragma once

// The squared-asymmetry inequality family
//     f_w(P) = w * s111(P) - (1 - w) * Delta(P) <= bound_w.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "trinet/distribution.hpp"
#include "trinet/error.hpp"

namespace trinet {

enum class OutcomeClass { AllEqual = 0, TwoEqual = 1, AllDistinct = 2 };

inline OutcomeClass outcome_class(int a, int b, int c) {
    if (a == b && b == c) return OutcomeClass::AllEqual;
    if (a == b || b == c || a == c) return OutcomeClass::TwoEqual;
    return OutcomeClass::AllDistinct;
}

/// Partition of the 64 cells into the 111-, 112- and 123-type classes.
struct OutcomeClassIndex {
    std::array<std::vector<int>, 3> members;

    static const OutcomeClassIndex& get() {
        static const OutcomeClassIndex index = [] {
            OutcomeClassIndex idx;
            for (int i = 0; i < kCells; ++i) {
                const auto t = cell_triple(i);
                idx.members[static_cast<int>(outcome_class(t.a, t.b, t.c))].push_back(i);
            }
            return idx;
        }();
        return index;
    }

    const std::vector<int>& operator[](OutcomeClass x) const { return members[static_cast<int>(x)]; }
};

namespace detail {

/// Neumaier compensated accumulator.
class CompensatedSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

}  // namespace detail

/// Probability that all three outcomes agree.
inline double s111(const TriangleDistribution& p) {
    double s = 0.0;
    for (int k = 0; k < kOutcomes; ++k) s += p(k, k, k);
    return s;
}

/// Class means M_X in the order 111, 112, 123.
inline std::array<double, 3> class_means(const TriangleDistribution& p) {
    std::array<double, 3> means{};
    const auto& idx = OutcomeClassIndex::get();
    for (int x = 0; x < 3; ++x) {
        detail::CompensatedSum s;
        for (int i : idx.members[x]) s.add(p[i]);
        means[x] = s.value() / static_cast<double>(idx.members[x].size());
    }
    return means;
}

/// Sum of squared deviations of every cell from the mean of its class.
inline double delta(const TriangleDistribution& p) {
    const auto means = class_means(p);
    const auto& idx = OutcomeClassIndex::get();
    detail::CompensatedSum s;
    for (int x = 0; x < 3; ++x) {
        for (int i : idx.members[x]) {
            const double d = means[x] - p[i];
            s.add(d * d);
        }
    }
    return s.value();
}

inline void validate_weight(double w) {
    if (!(w >= 0.0 && w <= 1.0)) throw ValidationError("inequality weight w must lie in [0,1]");
}

inline double f_w(const TriangleDistribution& p, double w) {
    validate_weight(w);
    return w * s111(p) - (1.0 - w) * delta(p);
}

enum class Verdict { Satisfied, Violated };

inline const char* to_string(Verdict v) { return v == Verdict::Violated ? "violated" : "satisfied"; }

struct InequalityReport {
    double w = 0.0;
    double s111 = 0.0;
    double delta = 0.0;
    double f_value = 0.0;
    double bound = 0.0;
    double margin = 0.0;  ///< f_value - bound
    Verdict verdict = Verdict::Satisfied;
};

inline InequalityReport evaluate(const TriangleDistribution& p, double w, double bound) {
    validate_weight(w);
    InequalityReport r;
    r.w = w;
    r.s111 = s111(p);
    r.delta = delta(p);
    r.f_value = w * r.s111 - (1.0 - w) * r.delta;
    r.bound = bound;
    r.margin = r.f_value - bound;
    r.verdict = r.margin > 0.0 ? Verdict::Violated : Verdict::Satisfied;
    return r;
}

// --- bound tables ------------------------------------------------------------

/// Weight and classical bound of the published inequality.
inline constexpr double kPublishedWeight = 0.0922;
inline constexpr double kPublishedBound = 0.0264;

struct BoundEntry {
    double w = 0.0;
    double bound = 0.0;
    std::string provenance;              ///< "published" or "lhv-search"
    std::optional<std::uint64_t> seed;   ///< generation seed for searched bounds
};

using BoundTable = std::vector<BoundEntry>;

inline BoundTable read_bound_table(std::istream& is) {
    BoundTable table;
    std::string line;
    std::size_t line_no = 0;
    bool header = false;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos || line[0] == '#') continue;
        const auto f = detail::split_csv_line(line);
        if (!header) {
            if (f.size() != 4 || f[0] != "w" || f[1] != "bound" || f[2] != "provenance" || f[3] != "seed") {
                throw ValidationError(detail::line_error(line_no, "expected header 'w,bound,provenance,seed'"));
            }
            header = true;
            continue;
        }
        if (f.size() != 4) throw ValidationError(detail::line_error(line_no, "expected 4 fields"));
        BoundEntry e;
        e.w = detail::parse_double(f[0], line_no);
        if (!(e.w >= 0.0 && e.w <= 1.0)) throw ValidationError(detail::line_error(line_no, "w outside [0,1]"));
        e.bound = detail::parse_double(f[1], line_no);
        e.provenance = f[2];
        if (!f[3].empty()) {
            try {
                e.seed = std::stoull(f[3]);
            } catch (const std::exception&) {
                throw ValidationError(detail::line_error(line_no, "seed '" + f[3] + "' is not an integer"));
            }
        }
        table.push_back(e);
    }
    if (table.empty()) throw ValidationError("bound table has no entries");
    std::sort(table.begin(), table.end(), [](const BoundEntry& x, const BoundEntry& y) { return x.w < y.w; });
    return table;
}

/// Shortest decimal text that parses back to exactly `x`.
inline std::string shortest(double x) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

inline void write_bound_table(std::ostream& os, const BoundTable& table) {
    os << "w,bound,provenance,seed\n";
    for (const auto& e : table) {
        os << shortest(e.w) << ',' << shortest(e.bound) << ',' << e.provenance << ',';
        if (e.seed) os << *e.seed;
        os << '\n';
    }
}

/// Bound recorded for exactly this w, if any.
inline std::optional<double> lookup_bound(const BoundTable& table, double w, double tol = 1e-12) {
    for (const auto& e : table) {
        if (std::abs(e.w - w) <= tol) return e.bound;
    }
    return std::nullopt;
}

struct SweepRow {
    InequalityReport report;
    double elegant_margin = 0.0;  ///< margin of the elegant distribution at the same (w, bound)
    double ratio_vs_elegant = 0.0;
};

/// Evaluates `p` against every (w, bound) entry. The ratio column compares
/// the margin with the one the ideal elegant distribution achieves and is
/// NaN where the elegant margin is not positive.
inline std::vector<SweepRow> sweep_w(const TriangleDistribution& p, const BoundTable& bounds,
                                     const TriangleDistribution& reference) {
    if (bounds.empty()) throw ValidationError("sweep needs at least one (w, bound) entry");
    std::vector<SweepRow> rows;
    rows.reserve(bounds.size());
    for (const auto& e : bounds) {
        SweepRow row;
        row.report = evaluate(p, e.w, e.bound);
        row.elegant_margin = evaluate(reference, e.w, e.bound).margin;
        row.ratio_vs_elegant = row.elegant_margin > 0.0 ? row.report.margin / row.elegant_margin
                                                        : std::numeric_limits<double>::quiet_NaN();
        rows.push_back(row);
    }
    return rows;
}

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
    os << "w,s111,delta,f_value,bound,margin,ratio_vs_elegant\n"
       << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& r : rows) {
        const auto& x = r.report;
        os << x.w << ',' << x.s111 << ',' << x.delta << ',' << x.f_value << ',' << x.bound << ',' << x.margin << ',';
        if (std::isnan(r.ratio_vs_elegant)) {
            os << "nan";
        } else {
            os << r.ratio_vs_elegant;
        }
        os << '\n';
    }
}

/// Default w grid: 0..0.3 in steps of 0.005, with extra points near 0.09 and 0.16.
inline std::vector<double> default_w_grid() {
    std::vector<double> w;
    for (int i = 0; i <= 60; ++i) w.push_back(0.005 * i);
    for (double x : {0.0875, 0.09, 0.0922, 0.0925, 0.0935, 0.1575, 0.16, 0.1625}) w.push_back(x);
    std::sort(w.begin(), w.end());
    w.erase(std::unique(w.begin(), w.end(), [](double a, double b) { return std::abs(a - b) < 1e-12; }), w.end());
    return w;
}

}  // namespace trinet
