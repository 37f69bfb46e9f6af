#pragma once

// Triangle local-hidden-variable models with neural response functions.
//
// Each source emits `hidden_dim` i.i.d. uniform variables in [0,1). Party A
// sees (beta, gamma), B sees (gamma, alpha), C sees (alpha, beta); the
// model distribution is the Monte Carlo average of the product of the three
// response vectors over sampled sources.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "trinet/distribution.hpp"
#include "trinet/error.hpp"
#include "trinet/network.hpp"
#include "trinet/seeds.hpp"

namespace trinet {

// --- hidden variables ---------------------------------------------------------

/// Sampled source outputs; each matrix is hidden_dim x count.
struct HiddenSamples {
    Eigen::MatrixXd alpha, beta, gamma;

    Eigen::Index count() const { return alpha.cols(); }
    int dim() const { return static_cast<int>(alpha.rows()); }
    const Eigen::MatrixXd& source(int s) const { return s == 0 ? alpha : (s == 1 ? beta : gamma); }
};

/// Uniform double in [0,1) from the top 53 bits of one 64-bit draw.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline HiddenSamples sample_hidden_triples(std::mt19937_64& rng, Eigen::Index count, int dim = 1) {
    if (count < 1) throw ValidationError("sample count must be at least 1");
    if (dim < 1) throw ValidationError("hidden-variable dimension must be at least 1");
    HiddenSamples s;
    s.alpha.resize(dim, count);
    s.beta.resize(dim, count);
    s.gamma.resize(dim, count);
    // Sample-major order: sample i draws (alpha_i, beta_i, gamma_i).
    for (Eigen::Index i = 0; i < count; ++i) {
        for (int d = 0; d < dim; ++d) s.alpha(d, i) = uniform01(rng);
        for (int d = 0; d < dim; ++d) s.beta(d, i) = uniform01(rng);
        for (int d = 0; d < dim; ++d) s.gamma(d, i) = uniform01(rng);
    }
    return s;
}

inline HiddenSamples sample_hidden_triples(Eigen::Index count, std::uint64_t seed, int dim = 1) {
    std::mt19937_64 rng(seed);
    return sample_hidden_triples(rng, count, dim);
}

// --- the model ----------------------------------------------------------------

enum class Party { A = 0, B = 1, C = 2 };

/// Sources (0 = alpha, 1 = beta, 2 = gamma) visible to a party. Source k is
/// the one opposite party k, so party p reads the other two.
constexpr std::array<int, 2> visible_sources(int party) { return {(party + 1) % 3, (party + 2) % 3}; }

template <typename Scalar>
class BasicLhvModel {
public:
    using Network = ResponseNetwork<Scalar>;
    using Matrix = typename Network::Matrix;
    using Vector = typename Network::Vector;

    BasicLhvModel() = default;

    /// Three networks 2*hidden_dim -> hidden_widths... -> 4.
    BasicLhvModel(int hidden_dim, const std::vector<int>& hidden_widths, Activation activation)
        : hidden_dim_(hidden_dim) {
        if (hidden_dim < 1) throw ValidationError("hidden-variable dimension must be at least 1");
        std::vector<int> widths{2 * hidden_dim};
        widths.insert(widths.end(), hidden_widths.begin(), hidden_widths.end());
        widths.push_back(Network::kOutputs);
        for (auto& n : networks_) n = Network(widths, activation);
    }

    int hidden_dim() const { return hidden_dim_; }
    Network& network(int party) { return networks_[party]; }
    const Network& network(int party) const { return networks_[party]; }
    Eigen::Index parameter_count() const {
        return networks_[0].parameter_count() + networks_[1].parameter_count() + networks_[2].parameter_count();
    }

    template <typename Rng>
    void initialize(Rng& rng, double input_scale = 1.0) {
        for (auto& n : networks_) n.initialize(rng, input_scale);
    }

    /// Network input of `party`: its two visible sources stacked.
    Matrix party_input(int party, const HiddenSamples& s) const {
        const auto src = visible_sources(party);
        Matrix in(2 * hidden_dim_, s.count());
        in.topRows(hidden_dim_) = s.source(src[0]).template cast<Scalar>();
        in.bottomRows(hidden_dim_) = s.source(src[1]).template cast<Scalar>();
        return in;
    }

    /// Response P_party(x | visible sources) for each sample (4 x count).
    Matrix response(int party, const HiddenSamples& s) const { return networks_[party].evaluate(party_input(party, s)); }

    template <typename To>
    BasicLhvModel<To> cast() const {
        BasicLhvModel<To> out;
        out.hidden_dim_ = hidden_dim_;
        for (int p = 0; p < 3; ++p) {
            out.networks_[p] = ResponseNetwork<To>(networks_[p].widths(), networks_[p].activation());
            out.networks_[p].parameters() = networks_[p].parameters().template cast<To>();
        }
        return out;
    }

private:
    template <typename>
    friend class BasicLhvModel;

    int hidden_dim_ = 1;
    std::array<Network, 3> networks_;
};

using LhvModel = BasicLhvModel<double>;

namespace detail {

/// Outer product table BC(4b + c, i) = pB(b, i) * pC(c, i).
template <typename Matrix>
Matrix pair_products(const Matrix& pb, const Matrix& pc) {
    Matrix bc(16, pb.cols());
    for (int b = 0; b < 4; ++b)
        for (int c = 0; c < 4; ++c) bc.row(4 * b + c) = pb.row(b).cwiseProduct(pc.row(c));
    return bc;
}

/// Sum over samples of pA (x) pB (x) pC, in the flat 16a + 4b + c order.
template <typename Matrix>
std::array<double, kCells> summed_products(const Matrix& pa, const Matrix& bc) {
    const Matrix s = pa * bc.transpose();  // 4 x 16
    std::array<double, kCells> out{};
    for (int a = 0; a < 4; ++a)
        for (int j = 0; j < 16; ++j) out[16 * a + j] = static_cast<double>(s(a, j));
    return out;
}

}  // namespace detail

/// Monte Carlo estimate of the model's outcome distribution. Large sample
/// sets are processed in fixed-size chunks so the summation order does not
/// depend on anything but the samples.
template <typename Scalar>
TriangleDistribution model_distribution(const BasicLhvModel<Scalar>& model, const HiddenSamples& samples) {
    const Eigen::Index n = samples.count();
    if (n < 1) throw ValidationError("model_distribution needs at least one sample");
    if (samples.dim() != model.hidden_dim()) throw ValidationError("sample dimension does not match the model");
    constexpr Eigen::Index kChunk = 1 << 16;
    std::array<double, kCells> acc{};
    for (Eigen::Index start = 0; start < n; start += kChunk) {
        const Eigen::Index len = std::min(kChunk, n - start);
        HiddenSamples chunk{samples.alpha.middleCols(start, len), samples.beta.middleCols(start, len),
                            samples.gamma.middleCols(start, len)};
        const auto pa = model.response(0, chunk);
        const auto bc = detail::pair_products(model.response(1, chunk), model.response(2, chunk));
        const auto part = detail::summed_products(pa, bc);
        for (int i = 0; i < kCells; ++i) acc[i] += part[i];
    }
    TriangleDistribution::Table t;
    double total = 0.0;
    for (int i = 0; i < kCells; ++i) {
        t[i] = std::max(0.0, acc[i] / static_cast<double>(n));
        total += t[i];
    }
    // Single-precision responses leave ~1e-7 of normalization slack.
    for (double& v : t) v /= total;
    return TriangleDistribution::from_table(t);
}

/// Distribution estimated from `count` fresh samples of `rng`.
template <typename Scalar>
TriangleDistribution model_distribution(const BasicLhvModel<Scalar>& model, std::mt19937_64& rng, Eigen::Index count) {
    constexpr Eigen::Index kChunk = 1 << 16;
    std::array<double, kCells> acc{};
    for (Eigen::Index done = 0; done < count; done += kChunk) {
        const Eigen::Index len = std::min(kChunk, count - done);
        const auto chunk = sample_hidden_triples(rng, len, model.hidden_dim());
        const auto p = model_distribution(model, chunk);
        for (int i = 0; i < kCells; ++i) acc[i] += p[i] * static_cast<double>(len);
    }
    TriangleDistribution::Table t;
    double total = 0.0;
    for (int i = 0; i < kCells; ++i) total += acc[i];
    for (int i = 0; i < kCells; ++i) t[i] = acc[i] / total;
    return TriangleDistribution::from_table(t);
}

// --- objectives ---------------------------------------------------------------

enum class ObjectiveKind { Distance, Inequality };

/// Training objective, expressed as a loss to minimize over raw 64-cell
/// estimates (which need not be exactly normalized).
struct Objective {
    ObjectiveKind kind = ObjectiveKind::Distance;
    TriangleDistribution target = TriangleDistribution::uniform();
    double w = 0.0;

    static Objective distance_to(const TriangleDistribution& target) {
        return {ObjectiveKind::Distance, target, 0.0};
    }
    static Objective maximize_f(double w) {
        if (!(w >= 0.0 && w <= 1.0)) throw ValidationError("inequality weight w must lie in [0,1]");
        return {ObjectiveKind::Inequality, TriangleDistribution::uniform(), w};
    }

    /// Squared distance, or -f_w.
    double loss(const std::array<double, kCells>& p) const {
        if (kind == ObjectiveKind::Distance) {
            double s = 0.0;
            for (int i = 0; i < kCells; ++i) s += (p[i] - target[i]) * (p[i] - target[i]);
            return s;
        }
        const auto means = class_means_raw(p);
        double s111 = 0.0, delta = 0.0;
        for (int i = 0; i < kCells; ++i) {
            const auto t = cell_triple(i);
            if (t.a == t.b && t.b == t.c) s111 += p[i];
            const double d = p[i] - means[class_of(i)];
            delta += d * d;
        }
        return -(w * s111 - (1.0 - w) * delta);
    }

    std::array<double, kCells> gradient(const std::array<double, kCells>& p) const {
        std::array<double, kCells> g{};
        if (kind == ObjectiveKind::Distance) {
            for (int i = 0; i < kCells; ++i) g[i] = 2.0 * (p[i] - target[i]);
            return g;
        }
        // The class means' own dependence on p cancels: deviations sum to zero per class.
        const auto means = class_means_raw(p);
        for (int i = 0; i < kCells; ++i) {
            const auto t = cell_triple(i);
            g[i] = 2.0 * (1.0 - w) * (p[i] - means[class_of(i)]);
            if (t.a == t.b && t.b == t.c) g[i] -= w;
        }
        return g;
    }

    /// Objective value reported to users: distance, or f_w.
    double report(const TriangleDistribution& p) const {
        return kind == ObjectiveKind::Distance ? trinet::distance(p, target) : -loss(p.table());
    }

    bool better(double candidate, double incumbent) const {
        return kind == ObjectiveKind::Distance ? candidate < incumbent : candidate > incumbent;
    }

private:
    static int class_of(int i) {
        const auto t = cell_triple(i);
        if (t.a == t.b && t.b == t.c) return 0;
        if (t.a == t.b || t.b == t.c || t.a == t.c) return 1;
        return 2;
    }

    static std::array<double, 3> class_means_raw(const std::array<double, kCells>& p) {
        std::array<double, 3> sum{}, n{};
        for (int i = 0; i < kCells; ++i) {
            sum[class_of(i)] += p[i];
            n[class_of(i)] += 1.0;
        }
        return {sum[0] / n[0], sum[1] / n[1], sum[2] / n[2]};
    }
};

inline std::string to_string(ObjectiveKind k) { return k == ObjectiveKind::Distance ? "distance" : "maximize_f_w"; }

// --- loss and gradient on a fixed batch ----------------------------------------------

template <typename Scalar>
struct LossAndGradient {
    double loss = 0.0;
    std::array<double, kCells> distribution{};
    std::array<typename BasicLhvModel<Scalar>::Vector, 3> gradient;
};

/// Loss of the batch estimate and its exact gradient with respect to every
/// network parameter.
template <typename Scalar>
LossAndGradient<Scalar> loss_and_gradient(const BasicLhvModel<Scalar>& model, const HiddenSamples& samples,
                                          const Objective& objective) {
    using Network = ResponseNetwork<Scalar>;
    using Matrix = typename Network::Matrix;
    const Eigen::Index n = samples.count();
    const Scalar inv_n = Scalar(1) / static_cast<Scalar>(n);

    std::array<typename Network::Workspace, 3> ws;
    for (int p = 0; p < 3; ++p) model.network(p).forward(model.party_input(p, samples), ws[p]);
    const Matrix& pa = ws[0].output;
    const Matrix& pb = ws[1].output;
    const Matrix& pc = ws[2].output;
    const Matrix bc = detail::pair_products(pb, pc);

    LossAndGradient<Scalar> out;
    out.distribution = detail::summed_products(pa, bc);
    for (double& v : out.distribution) v /= static_cast<double>(n);
    out.loss = objective.loss(out.distribution);

    const auto g = objective.gradient(out.distribution);
    Matrix gm(4, 16);
    for (int a = 0; a < 4; ++a)
        for (int j = 0; j < 16; ++j) gm(a, j) = static_cast<Scalar>(g[16 * a + j]);

    const Matrix d_pa = (gm * bc) * inv_n;
    const Matrix ga = gm.transpose() * pa;  // 16 x n, summed over a
    Matrix d_pb = Matrix::Zero(4, n), d_pc = Matrix::Zero(4, n);
    for (int b = 0; b < 4; ++b) {
        for (int c = 0; c < 4; ++c) {
            d_pb.row(b) += ga.row(4 * b + c).cwiseProduct(pc.row(c));
            d_pc.row(c) += ga.row(4 * b + c).cwiseProduct(pb.row(b));
        }
    }
    d_pb *= inv_n;
    d_pc *= inv_n;

    const std::array<const Matrix*, 3> grads{&d_pa, &d_pb, &d_pc};
    for (int p = 0; p < 3; ++p) {
        out.gradient[p] = Network::Vector::Zero(model.network(p).parameter_count());
        model.network(p).backward(ws[p], *grads[p], out.gradient[p]);
    }
    return out;
}

/// Compares the analytic gradient of the squared-distance loss with central
/// finite differences on `probes` randomly chosen parameters. Returns the
/// largest |g_analytic - g_numeric| / max(|g_analytic|, |g_numeric|, floor).
inline double gradient_check(const LhvModel& model, const TriangleDistribution& target, const HiddenSamples& samples,
                             std::uint64_t seed = 0, int probes = 64, double step = 1e-6, double floor = 1e-6) {
    const auto objective = Objective::distance_to(target);
    const auto analytic = loss_and_gradient(model, samples, objective);
    LhvModel probe = model;
    std::mt19937_64 rng(seed);
    double worst = 0.0;
    for (int k = 0; k < probes; ++k) {
        const int party = static_cast<int>(rng() % 3);
        auto& params = probe.network(party).parameters();
        const auto idx = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(params.size()));
        const double saved = params(idx);
        params(idx) = saved + step;
        const double up = loss_and_gradient(probe, samples, objective).loss;
        params(idx) = saved - step;
        const double down = loss_and_gradient(probe, samples, objective).loss;
        params(idx) = saved;
        const double numeric = (up - down) / (2.0 * step);
        const double exact = analytic.gradient[party](idx);
        const double scale = std::max({std::abs(exact), std::abs(numeric), floor});
        worst = std::max(worst, std::abs(exact - numeric) / scale);
    }
    return worst;
}

// --- training -------------------------------------------------------------------

enum class StepSchedule { Cosine, Constant };
enum class Precision { Single, Double };

struct TrainingConfig {
    Eigen::Index batch_size = 2000;
    double learning_rate = 1e-2;
    StepSchedule schedule = StepSchedule::Cosine;
    int iterations = 10000;
    int restarts = 20;
    Eigen::Index eval_samples = 1000000;
    std::uint64_t seed = 0;
    std::vector<int> hidden_widths{32, 32, 32, 32};
    Activation activation = Activation::Tanh;
    int hidden_dim = 1;
    double input_scale = 1.0;  ///< first-layer weight multiplier at initialization
    Precision precision = Precision::Single;
    int threads = 0;  ///< 0 = hardware concurrency

    void validate() const {
        if (batch_size < 1) throw ValidationError("batch size must be at least 1");
        if (eval_samples < batch_size) throw ValidationError("evaluation sample count must be >= batch size");
        if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
            throw ValidationError("learning rate must be positive");
        }
        if (iterations < 1) throw ValidationError("iteration budget must be positive");
        if (restarts < 1) throw ValidationError("restart count must be positive");
        if (hidden_dim < 1) throw ValidationError("hidden-variable dimension must be positive");
        if (!(input_scale > 0.0) || !std::isfinite(input_scale)) throw ValidationError("input scale must be positive");
        if (threads < 0) throw ValidationError("thread count must be non-negative");
        for (int w : hidden_widths) {
            if (w < 1) throw ValidationError("hidden layer widths must be positive");
        }
    }
};

inline std::string to_string(StepSchedule s) { return s == StepSchedule::Cosine ? "cosine" : "constant"; }
inline std::string to_string(Precision p) { return p == Precision::Single ? "single" : "double"; }

inline StepSchedule schedule_from_string(const std::string& s) {
    if (s == "cosine") return StepSchedule::Cosine;
    if (s == "constant") return StepSchedule::Constant;
    throw ValidationError("unknown step schedule '" + s + "' (expected cosine or constant)");
}

inline Precision precision_from_string(const std::string& s) {
    if (s == "single") return Precision::Single;
    if (s == "double") return Precision::Double;
    throw ValidationError("unknown precision '" + s + "' (expected single or double)");
}

struct RestartOutcome {
    int index = 0;
    std::uint64_t seed = 0;
    bool failed = false;
    std::string failure;                      ///< reason when failed
    double value = std::numeric_limits<double>::quiet_NaN();  ///< evaluated distance or f_w
    double final_loss = std::numeric_limits<double>::quiet_NaN();
};

struct FitResult {
    ObjectiveKind objective = ObjectiveKind::Distance;
    double w = 0.0;
    double best_value = std::numeric_limits<double>::quiet_NaN();
    int best_restart = -1;
    LhvModel best_model;
    TriangleDistribution evaluation = TriangleDistribution::uniform();
    std::vector<RestartOutcome> restarts;
    TrainingConfig config;

    int failed_restarts() const {
        return static_cast<int>(std::count_if(restarts.begin(), restarts.end(), [](const auto& r) { return r.failed; }));
    }
    std::vector<double> values() const {
        std::vector<double> v;
        for (const auto& r : restarts) v.push_back(r.value);
        return v;
    }
};

namespace detail {

template <typename Vector>
struct AdamState {
    Vector m, v;
    long step = 0;

    explicit AdamState(Eigen::Index n) : m(Vector::Zero(n)), v(Vector::Zero(n)) {}

    void apply(Vector& params, const Vector& grad, double lr) {
        using S = typename Vector::Scalar;
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        ++step;
        m = S(b1) * m + S(1 - b1) * grad;
        v = S(b2) * v + S(1 - b2) * grad.cwiseProduct(grad);
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
        const S rate = static_cast<S>(lr / c1);
        params.array() -= rate * m.array() / ((v.array() / static_cast<S>(c2)).sqrt() + static_cast<S>(eps));
    }
};

struct TrainedRestart {
    RestartOutcome outcome;
    LhvModel model;
    std::optional<TriangleDistribution> evaluation;
};

template <typename Scalar>
TrainedRestart train_restart(const Objective& objective, const TrainingConfig& cfg, int index) {
    TrainedRestart out;
    out.outcome.index = index;
    out.outcome.seed = cfg.seed + static_cast<std::uint64_t>(index);
    std::mt19937_64 rng(out.outcome.seed);

    BasicLhvModel<Scalar> model(cfg.hidden_dim, cfg.hidden_widths, cfg.activation);
    model.initialize(rng, cfg.input_scale);
    using Vector = typename BasicLhvModel<Scalar>::Vector;
    std::array<AdamState<Vector>, 3> adam{AdamState<Vector>(model.network(0).parameter_count()),
                                          AdamState<Vector>(model.network(1).parameter_count()),
                                          AdamState<Vector>(model.network(2).parameter_count())};

    for (int it = 0; it < cfg.iterations; ++it) {
        const auto batch = sample_hidden_triples(rng, cfg.batch_size, cfg.hidden_dim);
        auto lg = loss_and_gradient(model, batch, objective);
        bool finite = std::isfinite(lg.loss);
        for (const auto& g : lg.gradient) finite = finite && g.allFinite();
        if (!finite) {
            out.outcome.failed = true;
            out.outcome.failure = "non-finite loss or gradient at iteration " + std::to_string(it);
            return out;
        }
        out.outcome.final_loss = lg.loss;
        double lr = cfg.learning_rate;
        if (cfg.schedule == StepSchedule::Cosine) {
            lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * it / static_cast<double>(cfg.iterations)));
        }
        for (int p = 0; p < 3; ++p) adam[p].apply(model.network(p).parameters(), lg.gradient[p], lr);
    }

    out.model = model.template cast<double>();
    for (int p = 0; p < 3; ++p) {
        if (!out.model.network(p).parameters().allFinite()) {
            out.outcome.failed = true;
            out.outcome.failure = "non-finite parameters after training";
            return out;
        }
    }
    std::mt19937_64 eval_rng(derive_seed(out.outcome.seed, SeedStream::Evaluation));
    out.evaluation = model_distribution(out.model, eval_rng, cfg.eval_samples);
    out.outcome.value = objective.report(*out.evaluation);
    if (!std::isfinite(out.outcome.value)) {
        out.outcome.failed = true;
        out.outcome.failure = "non-finite evaluated objective";
    }
    return out;
}

}  // namespace detail

/// Runs `config.restarts` independent trainings and keeps the best. The
/// result does not depend on the thread count.
inline FitResult train(const Objective& objective, const TrainingConfig& config) {
    config.validate();
    std::vector<detail::TrainedRestart> runs(static_cast<std::size_t>(config.restarts));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int i = next++; i < config.restarts; i = next++) {
            runs[i] = config.precision == Precision::Single ? detail::train_restart<float>(objective, config, i)
                                                            : detail::train_restart<double>(objective, config, i);
        }
    };
    int threads = config.threads > 0 ? config.threads : static_cast<int>(std::thread::hardware_concurrency());
    threads = std::clamp(threads, 1, config.restarts);
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    }

    FitResult result;
    result.objective = objective.kind;
    result.w = objective.w;
    result.config = config;
    for (auto& run : runs) {
        result.restarts.push_back(run.outcome);
        if (run.outcome.failed) continue;
        if (result.best_restart < 0 || objective.better(run.outcome.value, result.best_value)) {
            result.best_value = run.outcome.value;
            result.best_restart = run.outcome.index;
            result.best_model = std::move(run.model);
            result.evaluation = *run.evaluation;
        }
    }
    if (result.best_restart < 0) throw ComputationError("every training restart failed");
    return result;
}

/// Closest model distribution to `target` in Euclidean distance.
inline FitResult fit(const TriangleDistribution& target, const TrainingConfig& config) {
    return train(Objective::distance_to(target), config);
}

/// Largest f_w the search can reach with a triangle-local model.
inline FitResult maximize_inequality(double w, const TrainingConfig& config) {
    return train(Objective::maximize_f(w), config);
}

/// A heuristic local maximum above the conjectured classical bound means a
/// bug or a counterexample to the bound. Either way it must surface.
struct BoundCheck {
    double value = 0.0;
    double bound = 0.0;
    double tolerance = 0.0;
    bool alarm = false;
    std::string message;
};

inline constexpr double kBoundTolerance = 1e-3;

inline BoundCheck check_against_bound(const FitResult& r, double bound, double tolerance = kBoundTolerance) {
    if (r.objective != ObjectiveKind::Inequality) throw ValidationError("bound checks apply to inequality searches");
    BoundCheck c{r.best_value, bound, tolerance, r.best_value > bound + tolerance, {}};
    if (c.alarm) {
        c.message = "local search reached f_w = " + std::to_string(r.best_value) + " at w = " + std::to_string(r.w) +
                    ", above the conjectured bound " + std::to_string(bound) + " + " + std::to_string(tolerance) +
                    ": either a bug or a counterexample to the bound";
    }
    return c;
}

// --- serialization --------------------------------------------------------------

inline nlohmann::json to_json(const TrainingConfig& c) {
    return {{"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"schedule", to_string(c.schedule)},
            {"iterations", c.iterations},
            {"restarts", c.restarts},
            {"eval_samples", c.eval_samples},
            {"seed", c.seed},
            {"hidden_widths", c.hidden_widths},
            {"activation", to_string(c.activation)},
            {"hidden_dim", c.hidden_dim},
            {"input_scale", c.input_scale},
            {"precision", to_string(c.precision)}};
}

/// Overlays keys present in `j` on top of `base`.
inline TrainingConfig training_config_from_json(const nlohmann::json& j, TrainingConfig base = {}) {
    try {
        if (j.contains("batch_size")) base.batch_size = j.at("batch_size").get<Eigen::Index>();
        if (j.contains("learning_rate")) base.learning_rate = j.at("learning_rate").get<double>();
        if (j.contains("schedule")) base.schedule = schedule_from_string(j.at("schedule").get<std::string>());
        if (j.contains("iterations")) base.iterations = j.at("iterations").get<int>();
        if (j.contains("restarts")) base.restarts = j.at("restarts").get<int>();
        if (j.contains("eval_samples")) base.eval_samples = j.at("eval_samples").get<Eigen::Index>();
        if (j.contains("seed")) base.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("hidden_widths")) base.hidden_widths = j.at("hidden_widths").get<std::vector<int>>();
        if (j.contains("activation")) base.activation = activation_from_string(j.at("activation").get<std::string>());
        if (j.contains("hidden_dim")) base.hidden_dim = j.at("hidden_dim").get<int>();
        if (j.contains("input_scale")) base.input_scale = j.at("input_scale").get<double>();
        if (j.contains("precision")) base.precision = precision_from_string(j.at("precision").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("bad training configuration: ") + e.what());
    }
    base.validate();
    return base;
}

inline nlohmann::json to_json(const LhvModel& m) {
    nlohmann::json j;
    j["format"] = "trinet-lhv-model";
    j["hidden_dim"] = m.hidden_dim();
    j["activation"] = to_string(m.network(0).activation());
    j["layer_widths"] = m.network(0).widths();
    j["networks"] = nlohmann::json::array();
    const char* names[] = {"A", "B", "C"};
    for (int p = 0; p < 3; ++p) {
        const auto& net = m.network(p);
        nlohmann::json layers = nlohmann::json::array();
        for (int l = 0; l < net.layer_count(); ++l) {
            const auto w = net.weight(l);
            const auto b = net.bias(l);
            layers.push_back({{"weights", std::vector<double>(w.data(), w.data() + w.size())},
                              {"bias", std::vector<double>(b.data(), b.data() + b.size())}});
        }
        j["networks"].push_back({{"party", names[p]}, {"layers", layers}});
    }
    return j;
}

inline LhvModel lhv_model_from_json(const nlohmann::json& j) {
    try {
        const auto widths = j.at("layer_widths").get<std::vector<int>>();
        const int dim = j.at("hidden_dim").get<int>();
        if (widths.size() < 2 || widths.front() != 2 * dim) {
            throw ValidationError("layer widths do not match the hidden-variable dimension");
        }
        LhvModel m(dim, std::vector<int>(widths.begin() + 1, widths.end() - 1),
                   activation_from_string(j.at("activation").get<std::string>()));
        const auto& nets = j.at("networks");
        if (!nets.is_array() || nets.size() != 3) throw ValidationError("model needs exactly three networks");
        for (int p = 0; p < 3; ++p) {
            auto& net = m.network(p);
            const auto& layers = nets[p].at("layers");
            if (!layers.is_array() || static_cast<int>(layers.size()) != net.layer_count()) {
                throw ValidationError("layer count does not match layer_widths");
            }
            for (int l = 0; l < net.layer_count(); ++l) {
                const auto w = layers[l].at("weights").get<std::vector<double>>();
                const auto b = layers[l].at("bias").get<std::vector<double>>();
                auto wm = net.weight(l);
                auto bm = net.bias(l);
                if (static_cast<Eigen::Index>(w.size()) != wm.size() || static_cast<Eigen::Index>(b.size()) != bm.size()) {
                    throw ValidationError("layer parameter count does not match layer_widths");
                }
                std::copy(w.begin(), w.end(), wm.data());
                std::copy(b.begin(), b.end(), bm.data());
            }
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("bad model checkpoint: ") + e.what());
    }
}

inline nlohmann::json to_json(const FitResult& r) {
    nlohmann::json j;
    j["objective"] = to_string(r.objective);
    if (r.objective == ObjectiveKind::Inequality) j["w"] = r.w;
    j["best_value"] = r.best_value;
    j["best_restart"] = r.best_restart;
    j["failed_restarts"] = r.failed_restarts();
    j["restarts"] = nlohmann::json::array();
    for (const auto& o : r.restarts) {
        nlohmann::json e{{"index", o.index}, {"seed", o.seed}, {"failed", o.failed}};
        if (o.failed) {
            e["failure"] = o.failure;
        } else {
            e["value"] = o.value;
            e["final_loss"] = o.final_loss;
        }
        j["restarts"].push_back(e);
    }
    j["config"] = to_json(r.config);
    j["evaluation"] = to_json(r.evaluation);
    j["model"] = to_json(r.best_model);
    return j;
}

}  // namespace trinet
