#pragma once

// Coincidence-count tables, Poisson resampling and synthetic experiments.

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "trinet/distribution.hpp"
#include "trinet/error.hpp"
#include "trinet/seeds.hpp"
#include "trinet/visibility.hpp"

namespace trinet {

/// Six-fold coincidence counts per outcome triple.
struct CountsTable {
    std::array<std::uint64_t, kCells> counts{};
    std::string label;
    std::string notes;

    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (auto c : counts) t += c;
        return t;
    }
    std::uint64_t operator()(int a, int b, int c) const { return counts[cell_index(a, b, c)]; }
};

inline TriangleDistribution normalize(const CountsTable& counts) {
    const auto total = counts.total();
    if (total == 0) throw ValidationError("cannot normalize an all-zero counts table");
    TriangleDistribution::Table t;
    for (int i = 0; i < kCells; ++i) t[i] = static_cast<double>(counts.counts[i]) / static_cast<double>(total);
    return TriangleDistribution::from_table(t);
}

/// Statistic evaluated on a resampled distribution; the seed lets stochastic
/// statistics (LHV fits) stay reproducible per replicate.
using Statistic = std::function<double(const TriangleDistribution&, std::uint64_t seed)>;

struct ReplicateFailure {
    int replicate = 0;
    std::string reason;
};

struct ResampleReport {
    std::string statistic;
    int replicates = 0;
    std::uint64_t seed = 0;
    std::vector<std::uint64_t> replicate_seeds;
    std::vector<std::optional<double>> values;  ///< empty where the replicate failed
    std::vector<ReplicateFailure> failures;
    double mean = 0.0;
    double std = 0.0;  ///< sample standard deviation of the successful replicates

    std::vector<double> successful_values() const {
        std::vector<double> out;
        for (const auto& v : values) {
            if (v) out.push_back(*v);
        }
        return out;
    }
};

/// Every cell redrawn as Poisson(original count), renormalized, and passed
/// to `statistic`. Replicate r uses derive_seed(seed, Resample, r).
inline ResampleReport poisson_resample(const CountsTable& counts, int replicates, const Statistic& statistic,
                                       std::uint64_t seed, std::string statistic_name = "custom", int threads = 1) {
    if (replicates < 2) throw ValidationError("resampling needs at least 2 replicates");
    if (threads < 1) threads = 1;
    ResampleReport rep;
    rep.statistic = std::move(statistic_name);
    rep.replicates = replicates;
    rep.seed = seed;
    rep.values.resize(replicates);
    rep.replicate_seeds.resize(replicates);
    std::vector<std::optional<std::string>> errors(replicates);

    std::atomic<int> next{0};
    auto worker = [&] {
        for (int r = next++; r < replicates; r = next++) {
            const std::uint64_t s = derive_seed(seed, SeedStream::Resample, static_cast<std::uint64_t>(r));
            rep.replicate_seeds[r] = s;
            std::mt19937_64 rng(s);
            CountsTable drawn;
            for (int i = 0; i < kCells; ++i) {
                const auto mean = counts.counts[i];
                if (mean == 0) continue;
                std::poisson_distribution<std::uint64_t> poisson(static_cast<double>(mean));
                drawn.counts[i] = poisson(rng);
            }
            try {
                const double v = statistic(normalize(drawn), splitmix64(s));
                if (!std::isfinite(v)) throw ComputationError("statistic returned a non-finite value");
                rep.values[r] = v;
            } catch (const std::exception& e) {
                errors[r] = e.what();
            }
        }
    };
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int t = 0; t < std::min(threads, replicates); ++t) pool.emplace_back(worker);
    }

    for (int r = 0; r < replicates; ++r) {
        if (errors[r]) rep.failures.push_back({r, *errors[r]});
    }
    const auto ok = rep.successful_values();
    if (ok.empty()) throw ComputationError("statistic failed on every replicate");
    double sum = 0.0;
    for (double v : ok) sum += v;
    rep.mean = sum / static_cast<double>(ok.size());
    double ss = 0.0;
    for (double v : ok) ss += (v - rep.mean) * (v - rep.mean);
    rep.std = ok.size() > 1 ? std::sqrt(ss / static_cast<double>(ok.size() - 1)) : 0.0;
    return rep;
}

/// Multinomial draw of `total_events` outcomes from `p` seen through
/// measurement visibility `nu`.
inline CountsTable synthesize_experiment(const TriangleDistribution& p, std::uint64_t total_events, double nu,
                                         std::uint64_t seed) {
    if (total_events < 1) throw ValidationError("synthetic experiment needs at least one event");
    const auto noisy = apply_visibility(p, nu);
    std::mt19937_64 rng(derive_seed(seed, SeedStream::Synthesis));
    CountsTable out;
    std::uint64_t remaining = total_events;
    double mass = 1.0;
    for (int i = 0; i < kCells && remaining > 0; ++i) {
        if (i == kCells - 1) {
            out.counts[i] = remaining;
            break;
        }
        const double prob = mass > 0.0 ? std::clamp(noisy[i] / mass, 0.0, 1.0) : 0.0;
        std::binomial_distribution<std::uint64_t> binom(remaining, prob);
        const auto k = binom(rng);
        out.counts[i] = k;
        remaining -= k;
        mass -= noisy[i];
    }
    out.label = "synthetic";
    out.notes = "events=" + std::to_string(total_events) + " nu=" + std::to_string(nu) + " seed=" + std::to_string(seed);
    return out;
}

// --- file formats -------------------------------------------------------------------

inline void write_counts_csv(std::ostream& os, const CountsTable& t) {
    os << "a,b,c,count\n";
    for (int i = 0; i < kCells; ++i) {
        const auto o = cell_triple(i);
        os << o.a + 1 << ',' << o.b + 1 << ',' << o.c + 1 << ',' << t.counts[i] << '\n';
    }
}

inline CountsTable read_counts_csv(std::istream& is) {
    CountsTable t;
    detail::read_cell_csv(is, "count", [&](int idx, const std::string& v, std::size_t line_no) {
        if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
            throw ValidationError(detail::line_error(line_no, "count '" + v + "' is not a non-negative integer"));
        }
        try {
            t.counts[idx] = std::stoull(v);
        } catch (const std::exception&) {
            throw ValidationError(detail::line_error(line_no, "count '" + v + "' is out of range"));
        }
    });
    return t;
}

inline nlohmann::json to_json(const CountsTable& t) {
    return {{"outcomes", kOutcomes},
            {"counts", std::vector<std::uint64_t>(t.counts.begin(), t.counts.end())},
            {"total", t.total()},
            {"label", t.label},
            {"notes", t.notes}};
}

inline CountsTable counts_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("counts")) throw ValidationError("counts JSON needs a \"counts\" array");
    const auto& arr = j.at("counts");
    if (!arr.is_array() || arr.size() != static_cast<std::size_t>(kCells)) {
        throw ValidationError("\"counts\" must hold 64 entries");
    }
    CountsTable t;
    for (int i = 0; i < kCells; ++i) {
        if (!arr[i].is_number_unsigned() && !(arr[i].is_number_integer() && arr[i].get<std::int64_t>() >= 0)) {
            throw ValidationError("count " + std::to_string(i) + " is not a non-negative integer");
        }
        t.counts[i] = arr[i].get<std::uint64_t>();
    }
    if (j.contains("total") && j.at("total").get<std::uint64_t>() != t.total()) {
        throw ValidationError("\"total\" does not equal the sum of the counts");
    }
    t.label = j.value("label", "");
    t.notes = j.value("notes", "");
    return t;
}

inline nlohmann::json to_json(const ResampleReport& r) {
    nlohmann::json values = nlohmann::json::array();
    for (const auto& v : r.values) values.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
    nlohmann::json failures = nlohmann::json::array();
    for (const auto& f : r.failures) failures.push_back({{"replicate", f.replicate}, {"reason", f.reason}});
    return {{"statistic", r.statistic}, {"replicates", r.replicates}, {"seed", r.seed},
            {"replicate_seeds", r.replicate_seeds}, {"values", values}, {"failures", failures},
            {"mean", r.mean}, {"std", r.std}};
}

}  // namespace trinet
