#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "trinet/inequality.hpp"
#include "trinet/quantum.hpp"
#include "trinet/stats.hpp"

using namespace trinet;

namespace {

CountsTable rounded_elegant(double events) {
    CountsTable t;
    const auto pe = elegant_distribution();
    for (int i = 0; i < kCells; ++i) t.counts[i] = static_cast<std::uint64_t>(std::llround(events * pe[i]));
    return t;
}

const Statistic kS111 = [](const TriangleDistribution& p, std::uint64_t) { return s111(p); };

}  // namespace

TEST(Normalize, Basics) {
    CountsTable single;
    single.counts[0] = 1;
    EXPECT_EQ(normalize(single)(0, 0, 0), 1.0);

    CountsTable ones;
    ones.counts.fill(1);
    EXPECT_EQ(normalize(ones), TriangleDistribution::uniform());

    EXPECT_THROW(normalize(CountsTable{}), ValidationError);

    const auto p = normalize(rounded_elegant(3343));
    EXPECT_LE(max_abs_difference(p, elegant_distribution()), 2e-4);
}

TEST(PoissonResample, S111SpreadMatchesBinomialOracle) {
    const auto counts = rounded_elegant(3343);
    const auto rep = poisson_resample(counts, 50, kS111, 2024, "s111");
    const double s = s111(normalize(counts));
    const double sigma = std::sqrt(s * (1 - s) / static_cast<double>(counts.total()));  // ~0.0084
    EXPECT_NEAR(rep.mean, 0.3906, 3 * sigma / std::sqrt(50.0) + 1e-3);
    EXPECT_GT(rep.std, 0.7 * sigma);
    EXPECT_LT(rep.std, 1.3 * sigma);
    EXPECT_EQ(rep.values.size(), 50u);
    EXPECT_TRUE(rep.failures.empty());
}

TEST(PoissonResample, MomentsAreConsistentWithValues) {
    const auto rep = poisson_resample(rounded_elegant(1000), 20, kS111, 3);
    const auto v = rep.successful_values();
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= v.size();
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    EXPECT_NEAR(rep.mean, mean, 1e-12);
    EXPECT_NEAR(rep.std, std::sqrt(ss / (v.size() - 1)), 1e-12);
}

TEST(PoissonResample, SingleCellSpread) {
    const auto counts = rounded_elegant(3343);
    const int cell = cell_index(0, 1, 2);
    const Statistic entry = [cell](const TriangleDistribution& p, std::uint64_t) { return p[cell]; };
    const auto rep = poisson_resample(counts, 200, entry, 77);
    const double expected = std::sqrt(static_cast<double>(counts.counts[cell])) / counts.total();
    EXPECT_NEAR(rep.std, expected, 0.25 * expected);
}

TEST(PoissonResample, ConstantStatisticAndDeterminism) {
    const auto counts = rounded_elegant(500);
    const auto rep = poisson_resample(counts, 10, [](const TriangleDistribution&, std::uint64_t) { return 1.0; }, 1);
    EXPECT_EQ(rep.std, 0.0);
    EXPECT_EQ(rep.mean, 1.0);
    const auto a = poisson_resample(counts, 10, kS111, 9);
    const auto b = poisson_resample(counts, 10, kS111, 9, "custom", 3);
    EXPECT_EQ(a.values, b.values);
    EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
    EXPECT_THROW(poisson_resample(counts, 1, kS111, 1), ValidationError);
}

TEST(PoissonResample, FailuresAreRecordedAndExcluded) {
    const auto counts = rounded_elegant(800);
    int calls = 0;
    const Statistic flaky = [&calls](const TriangleDistribution& p, std::uint64_t) {
        if (calls++ % 3 == 0) throw ComputationError("fit diverged");
        return s111(p);
    };
    const auto rep = poisson_resample(counts, 9, flaky, 5);
    EXPECT_EQ(rep.failures.size(), 3u);
    EXPECT_EQ(rep.successful_values().size(), 6u);
    EXPECT_FALSE(rep.values[0].has_value());
    EXPECT_EQ(rep.failures[0].reason, "fit diverged");
    const auto j = to_json(rep);
    EXPECT_TRUE(j["values"][0].is_null());
}

TEST(Synthesize, ExperimentScale) {
    const auto t = synthesize_experiment(elegant_distribution(), 3343, 1.0, 8);
    EXPECT_EQ(t.total(), 3343u);
    EXPECT_NEAR(s111(normalize(t)), 0.3906, 0.03);
}

TEST(Synthesize, LawOfLargeNumbers) {
    const auto t = synthesize_experiment(elegant_distribution(), 10000000, 1.0, 9);
    EXPECT_LE(max_abs_difference(normalize(t), elegant_distribution()), 5e-4);
    const auto noisy = synthesize_experiment(elegant_distribution(), 10000000, 0.8, 10);
    EXPECT_LE(max_abs_difference(normalize(noisy), apply_visibility(elegant_distribution(), 0.8)), 5e-4);
}

TEST(Synthesize, UniformStaysUniform) {
    const std::uint64_t n = 64000;
    const auto t = synthesize_experiment(TriangleDistribution::uniform(), n, 0.5, 11);
    EXPECT_EQ(t.total(), n);
    const double expected = n / 64.0, sd = std::sqrt(expected);
    for (auto c : t.counts) EXPECT_NEAR(static_cast<double>(c), expected, 5 * sd);
    EXPECT_EQ(synthesize_experiment(TriangleDistribution::uniform(), n, 0.5, 11).counts, t.counts);
    EXPECT_THROW(synthesize_experiment(TriangleDistribution::uniform(), 0, 0.5, 1), ValidationError);
    EXPECT_THROW(synthesize_experiment(TriangleDistribution::uniform(), 10, 1.5, 1), ValidationError);
}

TEST(CountsFormats, CsvAndJson) {
    const auto t = synthesize_experiment(elegant_distribution(), 3343, 0.95, 1);
    std::stringstream ss;
    write_counts_csv(ss, t);
    EXPECT_EQ(ss.str().rfind("a,b,c,count\n", 0), 0u);
    EXPECT_EQ(read_counts_csv(ss).counts, t.counts);
    const auto j = counts_from_json(nlohmann::json::parse(to_json(t).dump()));
    EXPECT_EQ(j.counts, t.counts);
    EXPECT_EQ(j.label, t.label);

    auto bad_total = to_json(t);
    bad_total["total"] = 1;
    EXPECT_THROW(counts_from_json(bad_total), ValidationError);

    std::istringstream bad("a,b,c,count\n1,1,1,3\n1,1,2,-4\n");
    try {
        read_counts_csv(bad);
        FAIL() << "expected a validation error";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
}
