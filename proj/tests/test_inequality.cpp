#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "trinet/inequality.hpp"
#include "trinet/quantum.hpp"

using namespace trinet;

namespace {

TriangleDistribution random_distribution(std::mt19937_64& rng) {
    std::exponential_distribution<double> e(1.0);
    TriangleDistribution::Table t;
    double s = 0.0;
    for (double& v : t) s += (v = e(rng));
    for (double& v : t) v /= s;
    return TriangleDistribution::from_table(t);
}

/// Delta by brute force: class of each cell decided by counting distinct labels.
double delta_oracle(const TriangleDistribution& p) {
    std::array<double, 3> sum{}, n{};
    auto cls = [](int i) {
        const auto t = cell_triple(i);
        return static_cast<int>(std::set<int>{t.a, t.b, t.c}.size()) - 1;
    };
    for (int i = 0; i < kCells; ++i) {
        sum[cls(i)] += p[i];
        n[cls(i)] += 1;
    }
    double d = 0.0;
    for (int i = 0; i < kCells; ++i) {
        const double m = sum[cls(i)] / n[cls(i)];
        d += (m - p[i]) * (m - p[i]);
    }
    return d;
}

}  // namespace

TEST(OutcomeClasses, PartitionSizes) {
    const auto& idx = OutcomeClassIndex::get();
    EXPECT_EQ(idx[OutcomeClass::AllEqual].size(), 4u);
    EXPECT_EQ(idx[OutcomeClass::TwoEqual].size(), 36u);
    EXPECT_EQ(idx[OutcomeClass::AllDistinct].size(), 24u);
    std::set<int> all;
    for (const auto& m : idx.members) all.insert(m.begin(), m.end());
    EXPECT_EQ(all.size(), 64u);
}

TEST(S111, KnownValues) {
    EXPECT_EQ(s111(elegant_distribution()), 100.0 / 256.0);
    EXPECT_EQ(s111(elegant_distribution()), 0.390625);
    EXPECT_EQ(s111(TriangleDistribution::uniform()), 0.0625);
    EXPECT_EQ(s111(TriangleDistribution::deterministic(0, 0, 0)), 1.0);
}

TEST(Delta, KnownValuesAndOracle) {
    EXPECT_LE(delta(elegant_distribution()), 1e-12);
    EXPECT_LE(delta(TriangleDistribution::uniform()), 1e-15);
    // Point mass on (1,1,1): the 111 class holds (1, 0, 0, 0) around mean 1/4.
    EXPECT_NEAR(delta(TriangleDistribution::deterministic(0, 0, 0)), 0.75, 1e-15);
    std::mt19937_64 rng(17);
    for (int k = 0; k < 20; ++k) {
        const auto p = random_distribution(rng);
        EXPECT_NEAR(delta(p), delta_oracle(p), 1e-15);
        EXPECT_GT(delta(p), 0.0);
    }
}

TEST(FW, KnownValues) {
    const auto pe = elegant_distribution();
    EXPECT_NEAR(f_w(pe, 0.0922), 0.0922 * 0.390625, 1e-15);
    EXPECT_NEAR(f_w(pe, 0.0922), 0.036015625, 1e-15);
    for (double w : {0.0, 0.1, 0.5, 1.0}) EXPECT_NEAR(f_w(TriangleDistribution::uniform(), w), w / 16.0, 1e-15);
    std::mt19937_64 rng(1);
    const auto p = random_distribution(rng);
    EXPECT_EQ(f_w(p, 0.0), -delta(p));
    EXPECT_THROW(f_w(pe, -0.1), ValidationError);
    EXPECT_THROW(f_w(pe, 1.5), ValidationError);
}

TEST(Evaluate, PublishedInequality) {
    const auto r = evaluate(elegant_distribution(), kPublishedWeight, kPublishedBound);
    EXPECT_NEAR(r.margin, 0.009615625, 1e-12);
    EXPECT_GE(r.margin, 0.0094);
    EXPECT_LE(r.margin, 0.0098);
    EXPECT_EQ(r.verdict, Verdict::Violated);
    EXPECT_NEAR(r.margin, r.f_value - r.bound, 1e-12);

    const auto u = evaluate(TriangleDistribution::uniform(), kPublishedWeight, kPublishedBound);
    EXPECT_NEAR(u.margin, 0.0922 / 16.0 - 0.0264, 1e-15);
    EXPECT_EQ(u.verdict, Verdict::Satisfied);
}

TEST(Symmetry, InvariantUnderPartyPermutationAndRelabeling) {
    std::mt19937_64 rng(23);
    for (int k = 0; k < 10; ++k) {
        const auto p = random_distribution(rng);
        const auto q = p.permute_parties({2, 0, 1}).relabel_outcomes({2, 3, 1, 0});
        EXPECT_NEAR(s111(p), s111(q), 1e-15);
        EXPECT_NEAR(delta(p), delta(q), 1e-15);
        EXPECT_NEAR(f_w(p, 0.3), f_w(q, 0.3), 1e-15);
    }
}

TEST(Affinity, S111IsLinearAlongMixtures) {
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 20; ++k) {
        const auto p = random_distribution(rng), q = random_distribution(rng);
        const double lambda = u(rng);
        EXPECT_NEAR(s111(p.mix(q, lambda)), lambda * s111(p) + (1 - lambda) * s111(q), 1e-12);
        // Delta is convex along the segment.
        EXPECT_LE(delta(p.mix(q, lambda)), lambda * delta(p) + (1 - lambda) * delta(q) + 1e-15);
    }
}

TEST(Delta, ZeroExactlyForClassConstantDistributions) {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 10; ++k) {
        const double x = u(rng), y = u(rng), z = u(rng);
        const double norm = 4 * x + 36 * y + 24 * z;
        TriangleDistribution::Table t;
        for (int i = 0; i < kCells; ++i) {
            const auto c = cell_triple(i);
            const auto cls = outcome_class(c.a, c.b, c.c);
            t[i] = (cls == OutcomeClass::AllEqual ? x : cls == OutcomeClass::TwoEqual ? y : z) / norm;
        }
        EXPECT_LT(delta(TriangleDistribution::from_table(t)), 1e-30);
    }
}

TEST(BoundTable, ReadWriteAndLookup) {
    std::istringstream in("w,bound,provenance,seed\n0.16,0.05,lhv-search,7\n0.0922,0.0264,published,\n");
    const auto table = read_bound_table(in);
    ASSERT_EQ(table.size(), 2u);
    EXPECT_EQ(table[0].w, 0.0922);  // sorted by w
    EXPECT_FALSE(table[0].seed.has_value());
    EXPECT_EQ(*table[1].seed, 7u);
    EXPECT_EQ(*lookup_bound(table, 0.0922), 0.0264);
    EXPECT_FALSE(lookup_bound(table, 0.5).has_value());

    std::stringstream out;
    write_bound_table(out, table);
    const auto again = read_bound_table(out);
    EXPECT_EQ(again[1].bound, table[1].bound);

    std::istringstream bad("w,bound,provenance,seed\n1.5,0.1,x,\n");
    EXPECT_THROW(read_bound_table(bad), ValidationError);
}

TEST(BundledBounds, ContainPublishedEntry) {
    std::ifstream f(std::string(TRINET_DATA_DIR) + "/bounds.csv");
    ASSERT_TRUE(f.good());
    const auto table = read_bound_table(f);
    const auto b = lookup_bound(table, kPublishedWeight);
    ASSERT_TRUE(b.has_value());
    EXPECT_EQ(*b, kPublishedBound);
    for (const auto& e : table) EXPECT_TRUE(e.provenance == "published" || e.provenance == "lhv-search") << e.provenance;
}

TEST(Sweep, ElegantViolatesAndUniformSatisfies) {
    std::ifstream f(std::string(TRINET_DATA_DIR) + "/bounds.csv");
    const auto table = read_bound_table(f);
    const auto pe = elegant_distribution();
    const auto elegant_rows = sweep_w(pe, table, pe);
    const auto uniform_rows = sweep_w(TriangleDistribution::uniform(), table, pe);
    ASSERT_EQ(elegant_rows.size(), table.size());
    for (std::size_t i = 0; i < table.size(); ++i) {
        EXPECT_LE(uniform_rows[i].report.margin, 0.0) << "w = " << table[i].w;
        if (elegant_rows[i].elegant_margin > 0.0) EXPECT_NEAR(elegant_rows[i].ratio_vs_elegant, 1.0, 1e-12);
    }
    const auto at16 = sweep_w(pe, {BoundEntry{0.16, *lookup_bound(table, 0.16), "", {}}}, pe);
    EXPECT_EQ(at16[0].report.verdict, Verdict::Violated);
    EXPECT_THROW(sweep_w(pe, {}, pe), ValidationError);
}

TEST(Sweep, CsvColumns) {
    const auto pe = elegant_distribution();
    std::stringstream ss;
    write_sweep_csv(ss, sweep_w(pe, {BoundEntry{0.0922, 0.0264, "published", {}}}, pe));
    std::string header;
    std::getline(ss, header);
    EXPECT_EQ(header, "w,s111,delta,f_value,bound,margin,ratio_vs_elegant");
}

TEST(WGrid, CoversRegionOfInterest) {
    const auto g = default_w_grid();
    EXPECT_EQ(g.front(), 0.0);
    EXPECT_NEAR(g.back(), 0.3, 1e-12);
    EXPECT_TRUE(std::is_sorted(g.begin(), g.end()));
    EXPECT_NE(std::find(g.begin(), g.end(), 0.0922), g.end());
}
