#pragma once

// Measurement white noise: every POVM element E becomes nu*E + (1-nu)/4 * I,
// and the distance of the noisy distribution to the local set is tracked as
// a function of nu.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "trinet/distribution.hpp"
#include "trinet/error.hpp"
#include "trinet/lhv.hpp"
#include "trinet/seeds.hpp"

namespace trinet {

/// Noisy distribution computed from the marginals of `p`:
///   nu^3 P + nu^2 (1-nu)/4 (three two-party marginals)
///          + nu ((1-nu)/4)^2 (three one-party marginals) + ((1-nu)/4)^3.
inline TriangleDistribution apply_visibility(const TriangleDistribution& p, double nu) {
    if (!(nu >= 0.0 && nu <= 1.0)) throw ValidationError("visibility must lie in [0,1]");
    std::array<double, 16> ab{}, ac{}, bc{};
    std::array<double, 4> a{}, b{}, c{};
    for (int i = 0; i < kCells; ++i) {
        const auto t = cell_triple(i);
        const double v = p[i];
        ab[4 * t.a + t.b] += v;
        ac[4 * t.a + t.c] += v;
        bc[4 * t.b + t.c] += v;
        a[t.a] += v;
        b[t.b] += v;
        c[t.c] += v;
    }
    const double q = (1.0 - nu) / 4.0;
    const double w3 = nu * nu * nu, w2 = nu * nu * q, w1 = nu * q * q, w0 = q * q * q;
    TriangleDistribution::Table out;
    for (int i = 0; i < kCells; ++i) {
        const auto t = cell_triple(i);
        out[i] = w3 * p[i] + w2 * (ab[4 * t.a + t.b] + ac[4 * t.a + t.c] + bc[4 * t.b + t.c]) +
                 w1 * (a[t.a] + b[t.b] + c[t.c]) + w0;
    }
    return TriangleDistribution::from_table(out);
}

/// Distances below this are indistinguishable from an exactly local fit.
inline constexpr double kLocalDistanceFloor = 0.003;

struct VisibilityPoint {
    double nu = 0.0;
    double distance = std::numeric_limits<double>::quiet_NaN();
    std::optional<double> distance_std;
    std::uint64_t seed = 0;
    int failed_restarts = 0;
    bool failed = false;      ///< every restart failed
    std::string failure;

    bool consistent_with_local() const { return !failed && distance < kLocalDistanceFloor; }
};

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double x_intercept = 0.0;
    double window_lo = 0.0;
    double window_hi = 0.0;
    int points = 0;
};

struct VisibilityCurve {
    std::vector<VisibilityPoint> points;
    std::optional<LinearFit> fit;

    /// Throws unless nu is strictly increasing and distances are non-negative.
    void validate() const {
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (i > 0 && !(points[i].nu > points[i - 1].nu)) {
                throw ValidationError("visibility values must be strictly increasing");
            }
            if (!points[i].failed && !(points[i].distance >= 0.0)) {
                throw ValidationError("distances must be non-negative");
            }
        }
    }
};

/// {0, 0.1, ..., 0.8} followed by a dense grid from 0.85 to 1.
inline std::vector<double> default_visibility_grid() {
    std::vector<double> nus;
    for (int i = 0; i <= 8; ++i) nus.push_back(0.1 * i);
    for (double x : {0.85, 0.875, 0.9, 0.925, 0.95, 0.975, 1.0}) nus.push_back(x);
    return nus;
}

/// Fits the distance to the local set at every nu. Point k trains with seed
/// derive_seed(config.seed, Visibility, k).
inline VisibilityCurve visibility_sweep(const TriangleDistribution& p, const std::vector<double>& nus,
                                        const TrainingConfig& config) {
    config.validate();
    if (nus.empty()) throw ValidationError("visibility sweep needs at least one nu");
    VisibilityCurve curve;
    for (std::size_t k = 0; k < nus.size(); ++k) {
        VisibilityPoint pt;
        pt.nu = nus[k];
        TrainingConfig cfg = config;
        cfg.seed = derive_seed(config.seed, SeedStream::Visibility, k);
        pt.seed = cfg.seed;
        const auto noisy = apply_visibility(p, nus[k]);
        try {
            const auto r = fit(noisy, cfg);
            pt.distance = r.best_value;
            pt.failed_restarts = r.failed_restarts();
        } catch (const ComputationError& e) {
            pt.failed = true;
            pt.failed_restarts = cfg.restarts;
            pt.failure = e.what();
        }
        curve.points.push_back(pt);
    }
    curve.validate();
    return curve;
}

/// Least-squares line through the points with nu in [lo, hi]; returns the
/// fit with its zero crossing.
inline LinearFit critical_visibility(const VisibilityCurve& curve, double lo = 0.9, double hi = 1.0) {
    std::vector<std::pair<double, double>> xy;
    for (const auto& p : curve.points) {
        if (!p.failed && p.nu >= lo && p.nu <= hi) xy.emplace_back(p.nu, p.distance);
    }
    if (xy.size() < 2) {
        std::ostringstream os;
        os << "critical visibility needs at least 2 points in [" << lo << ", " << hi << "], found " << xy.size();
        throw ComputationError(os.str());
    }
    const double n = static_cast<double>(xy.size());
    double mx = 0.0, my = 0.0;
    for (const auto& [x, y] : xy) {
        mx += x;
        my += y;
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (const auto& [x, y] : xy) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if (!(sxx > 0.0)) throw ComputationError("critical visibility needs at least two distinct nu values");
    LinearFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.window_lo = lo;
    f.window_hi = hi;
    f.points = static_cast<int>(xy.size());
    if (!(f.slope > 0.0)) {
        std::ostringstream os;
        os << "fitted slope " << f.slope << " is not positive; distance does not grow with visibility in [" << lo
           << ", " << hi << "]";
        throw ComputationError(os.str());
    }
    f.x_intercept = -f.intercept / f.slope;
    return f;
}

inline void write_curve_csv(std::ostream& os, const VisibilityCurve& curve) {
    os << "nu,distance,distance_std,flag\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& p : curve.points) {
        os << p.nu << ',';
        if (p.failed) {
            os << "nan,,failed\n";
            continue;
        }
        os << p.distance << ',';
        if (p.distance_std) os << *p.distance_std;
        os << ',' << (p.consistent_with_local() ? "consistent_with_local" : "") << '\n';
    }
}

inline nlohmann::json to_json(const LinearFit& f) {
    return {{"slope", f.slope},
            {"intercept", f.intercept},
            {"x_intercept", f.x_intercept},
            {"window", {f.window_lo, f.window_hi}},
            {"points", f.points}};
}

}  // namespace trinet
