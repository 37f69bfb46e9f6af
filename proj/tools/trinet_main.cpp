// trinet: command-line front end for the triangle-network toolkit.
//
// Every command writes its primary output plus <out>.manifest.json. Passing a
// manifest back through --config reruns the command with the same options.

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "trinet/inequality.hpp"
#include "trinet/lhv.hpp"
#include "trinet/quantum.hpp"
#include "trinet/stats.hpp"
#include "trinet/visibility.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace trinet;

namespace {

enum Exit : int { kOk = 0, kViolated = 1, kUsage = 2, kComputation = 3, kBoundAlarm = 4 };

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read '" + path + "'");
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    std::vector<char> buf(1 << 16);
    while (in.read(buf.data(), static_cast<std::streamsize>(buf.size())) || in.gcount() > 0) {
        EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return os.str();
}

bool has_extension(const std::string& path, const std::string& ext) {
    return fs::path(path).extension() == ext;
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError("'" + path + "' is not valid JSON: " + e.what());
    }
}

std::ofstream open_output(const std::string& path) {
    if (path.empty()) throw ValidationError("--out is required");
    std::ofstream os(path);
    if (!os) throw ValidationError("cannot write '" + path + "'");
    return os;
}

/// Shared state for one command invocation.
struct Run {
    std::string command;
    CLI::App* app = nullptr;
    std::map<std::string, std::string> inputs;  // path -> sha256
    json seeds = json::object();
    std::vector<std::string> outputs;

    void input(const std::string& path) { inputs[path] = sha256_file(path); }

    json options() const {
        json o = json::object();
        for (const CLI::Option* opt : app->get_options()) {
            const auto& names = opt->get_lnames();
            if (names.empty() || names[0] == "help" || names[0] == "config") continue;
            if (opt->get_type_size() == 0) {
                o[names[0]] = opt->count() > 0;
            } else if (opt->count() > 0) {
                std::string joined;
                for (const auto& r : opt->results()) joined += (joined.empty() ? "" : ",") + r;
                o[names[0]] = joined;
            } else if (!opt->get_default_str().empty()) {
                std::string d = opt->get_default_str();
                if (d.size() >= 2 && d.front() == '[' && d.back() == ']') d = d.substr(1, d.size() - 2);
                o[names[0]] = d;
            }
        }
        return o;
    }

    void write_manifest(const std::string& out, double seconds) const {
        json m;
        m["command"] = command;
        m["version"] = TRINET_VERSION;
        m["options"] = options();
        m["seeds"] = seeds;
        m["inputs"] = json::object();
        for (const auto& [p, d] : inputs) m["inputs"][p] = {{"sha256", d}};
        m["outputs"] = outputs;
        m["wall_clock_seconds"] = seconds;
        std::ofstream os(out + ".manifest.json");
        os << m.dump(2) << '\n';
    }
};

TriangleDistribution load_distribution(const std::string& spec, Run& run) {
    if (spec == "elegant") return elegant_distribution();
    if (spec == "uniform") return TriangleDistribution::uniform();
    run.input(spec);
    if (has_extension(spec, ".csv")) {
        std::ifstream in(spec);
        return read_distribution_csv(in);
    }
    const auto j = read_json_file(spec);
    // Fit results carry their evaluated distribution.
    if (j.contains("evaluation") && !j.contains("p")) return distribution_from_json(j.at("evaluation"));
    return distribution_from_json(j);
}

CountsTable load_counts(const std::string& path, Run& run) {
    run.input(path);
    if (has_extension(path, ".csv")) {
        std::ifstream in(path);
        return read_counts_csv(in);
    }
    return counts_from_json(read_json_file(path));
}

void write_distribution(const std::string& path, const TriangleDistribution& p) {
    auto os = open_output(path);
    if (has_extension(path, ".csv")) {
        write_csv(os, p);
    } else {
        os << to_json(p).dump(2) << '\n';
    }
}

std::vector<double> parse_list(const std::string& s, const std::string& what) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw ValidationError("bad number '" + tok + "' in " + what);
        }
    }
    return out;
}

BoundTable load_bounds(const std::string& path, Run& run) {
    run.input(path);
    std::ifstream in(path);
    return read_bound_table(in);
}

// --- training flags shared by fit, visibility, resample and inequality --search

struct TrainingFlags {
    TrainingConfig config;
    std::string schedule = to_string(config.schedule);
    std::string activation = to_string(config.activation);
    std::string precision = to_string(config.precision);
    std::vector<int> widths = config.hidden_widths;

    void add(CLI::App* app) {
        app->add_option("--batch", config.batch_size, "Hidden-variable samples per gradient step");
        app->add_option("--lr", config.learning_rate, "Adam step size");
        app->add_option("--schedule", schedule, "Step schedule (cosine|constant)");
        app->add_option("--iterations", config.iterations, "Gradient steps per restart");
        app->add_option("--restarts", config.restarts, "Independent restarts");
        app->add_option("--eval-samples", config.eval_samples, "Samples for the final evaluation");
        app->add_option("--widths", widths, "Hidden layer widths, comma separated")->delimiter(',');
        app->add_option("--activation", activation, "tanh|softplus");
        app->add_option("--hidden-dim", config.hidden_dim, "Dimension of each hidden variable");
        app->add_option("--precision", precision, "Training arithmetic (single|double)");
    }

    TrainingConfig resolve(std::uint64_t seed, int threads) {
        TrainingConfig c = config;
        c.schedule = schedule_from_string(schedule);
        c.activation = activation_from_string(activation);
        c.precision = precision_from_string(precision);
        c.hidden_widths = widths;
        c.seed = seed;
        c.threads = threads;
        c.validate();
        return c;
    }
};

json restart_seeds(const FitResult& r) {
    json s = json::array();
    for (const auto& o : r.restarts) s.push_back(o.seed);
    return s;
}

// --- argv rewriting for --config ---------------------------------------------------

/// Returns argv with every config key absent from the command line appended
/// as a flag, so that flags > config file > defaults.
std::vector<std::string> apply_config(std::vector<std::string> args) {
    std::string path;
    for (std::size_t i = 0; i + 1 < args.size(); ++i) {
        if (args[i] == "--config") path = args[i + 1];
    }
    for (const auto& a : args) {
        if (a.rfind("--config=", 0) == 0) path = a.substr(9);
    }
    if (path.empty()) return args;
    json j = read_json_file(path);
    if (j.contains("options") && j.contains("command")) j = j["options"];
    if (!j.is_object()) throw ValidationError("config file must hold a JSON object");
    auto present = [&](const std::string& key) {
        for (const auto& a : args) {
            if (a == "--" + key || a.rfind("--" + key + "=", 0) == 0) return true;
        }
        return false;
    };
    for (const auto& [key, value] : j.items()) {
        if (key == "config" || present(key)) continue;
        if (value.is_boolean()) {
            if (value.get<bool>()) args.push_back("--" + key);
            continue;
        }
        std::string text;
        if (value.is_string()) {
            text = value.get<std::string>();
        } else if (value.is_array()) {
            for (const auto& v : value) text += (text.empty() ? "" : ",") + (v.is_string() ? v.get<std::string>() : v.dump());
        } else {
            text = value.dump();
        }
        args.push_back("--" + key + "=" + text);
    }
    return args;
}

void summary(const std::string& line) { std::cout << line << '\n'; }

std::string fmt(double x, int digits = 6) {
    std::ostringstream os;
    os << std::setprecision(digits) << x;
    return os.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Triangle-network nonlocality toolkit"};
    app.set_version_flag("--version", std::string(TRINET_VERSION));
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();

    std::uint64_t seed = 0;
    int threads = 0;
    std::string out;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--seed", seed, "Base seed");
        sub->add_option("--threads", threads, "Worker cap (0 = all cores)")->envname("TRINET_THREADS");
        sub->add_option("--config", "JSON options file or a previous run's manifest");
        sub->add_option("--out", out, "Primary output file");
    };

    // simulate
    auto* sim = app.add_subcommand("simulate", "Distribution of three pair states measured at every node");
    std::string povm = "ejm", state = "singlet", rotation;
    sim->add_option("--povm", povm, "ejm, id, or a POVM JSON file");
    sim->add_option("--state", state, "singlet, or a pair-state JSON file");
    sim->add_option("--rotate-tetrahedron", rotation, "z-y-z Euler angles in degrees, e.g. 30,40,10");
    add_common(sim);

    // fit
    auto* fit_cmd = app.add_subcommand("fit", "Train LHV models against a target distribution");
    std::string target = "elegant", checkpoint, bounds_path = std::string(TRINET_DATA_DIR) + "/bounds.csv";
    std::optional<double> maximize_w, bound_override;
    TrainingFlags fit_flags;
    fit_cmd->add_option("--target", target, "elegant, uniform, or a distribution file");
    fit_cmd->add_option("--maximize-w", maximize_w, "Maximize f_w instead of fitting the target");
    fit_cmd->add_option("--bound", bound_override, "Conjectured bound for the alarm check (with --maximize-w)");
    fit_cmd->add_option("--bounds", bounds_path, "Bound table used when --bound is absent");
    fit_cmd->add_option("--checkpoint", checkpoint, "Also write the best model here");
    fit_flags.add(fit_cmd);
    add_common(fit_cmd);

    // inequality
    auto* ineq = app.add_subcommand("inequality", "Evaluate or sweep the s111/Delta inequality family");
    double w = kPublishedWeight;
    bool sweep = false, search = false;
    std::string grid;
    TrainingFlags search_flags;
    ineq->add_option("--target", target, "elegant, uniform, or a distribution file");
    ineq->add_option("--w", w, "Inequality weight");
    ineq->add_option("--bound", bound_override, "Bound (default: looked up in --bounds)");
    ineq->add_option("--bounds", bounds_path, "Bound table CSV");
    ineq->add_flag("--sweep", sweep, "Evaluate every row of the bound table");
    ineq->add_flag("--search", search, "Estimate bounds by LHV maximization and write a bound table");
    ineq->add_option("--grid", grid, "Weights for --search, comma separated");
    search_flags.add(ineq);
    add_common(ineq);

    // visibility
    auto* vis = app.add_subcommand("visibility", "Distance to the local set along a white-noise curve");
    std::string nus, window = "0.9,1.0", fit_out;
    TrainingFlags vis_flags;
    vis->add_option("--target", target, "elegant, uniform, or a distribution file");
    vis->add_option("--nus", nus, "Visibilities, comma separated (default grid if absent)");
    vis->add_option("--window", window, "Visibility window for the critical-visibility line fit");
    vis->add_option("--fit-out", fit_out, "Line-fit JSON (default <out>.fit.json)");
    vis_flags.add(vis);
    add_common(vis);

    // resample
    auto* res = app.add_subcommand("resample", "Poisson Monte Carlo error bars for a statistic of a counts table");
    std::string counts_path, statistic = "s111";
    int replicates = 50;
    TrainingFlags res_flags;
    res->add_option("--counts", counts_path, "Counts file (CSV a,b,c,count or JSON)")->required();
    res->add_option("--statistic", statistic, "s111, delta, f_w or distance");
    res->add_option("--w", w, "Weight for --statistic f_w");
    res->add_option("--replicates", replicates, "Monte Carlo replicates");
    res_flags.add(res);
    add_common(res);

    // synth
    auto* syn = app.add_subcommand("synth", "Synthetic counts table at finite statistics");
    std::uint64_t events = 3343;
    double nu = 1.0;
    std::string label;
    syn->add_option("--target", target, "elegant, uniform, or a distribution file");
    syn->add_option("--events", events, "Total events");
    syn->add_option("--nu", nu, "Measurement visibility");
    syn->add_option("--label", label, "Free-text label stored in the counts file");
    add_common(syn);

    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        args = apply_config(args);
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    }

    Run run;
    run.app = app.get_subcommands().front();
    run.command = run.app->get_name();
    run.seeds["base"] = seed;
    const auto start = std::chrono::steady_clock::now();
    int code = kOk;

    try {
        if (run.command == "simulate") {
            Tetrahedron tetra = tetrahedron_default();
            if (!rotation.empty()) {
                const auto deg = parse_list(rotation, "--rotate-tetrahedron");
                if (deg.size() != 3) throw ValidationError("--rotate-tetrahedron needs three angles");
                const double k = std::numbers::pi / 180.0;
                tetra = rotate(tetra, euler_zyz(deg[0] * k, deg[1] * k, deg[2] * k));
            }
            Povm m = Povm::trivial();
            if (povm == "ejm") {
                m = ejm_basis(tetra).povm();
            } else if (povm != "id") {
                run.input(povm);
                m = povm_from_json(read_json_file(povm));
            }
            QubitPairState s = QubitPairState::singlet();
            if (state != "singlet") {
                run.input(state);
                s = pair_state_from_json(read_json_file(state));
            }
            const auto p = triangle_distribution(triangle_state(s, s, s), m, m, m);
            write_distribution(out, p);
            summary("P(1,1,1) = " + fmt(p(0, 0, 0), 10) + "  s111 = " + fmt(s111(p), 10));
        } else if (run.command == "fit") {
            const auto cfg = fit_flags.resolve(seed, threads);
            FitResult r;
            std::optional<BoundCheck> check;
            if (maximize_w) {
                r = maximize_inequality(*maximize_w, cfg);
                std::optional<double> b = bound_override;
                if (!b && fs::exists(bounds_path)) b = lookup_bound(load_bounds(bounds_path, run), *maximize_w);
                if (b) check = check_against_bound(r, *b);
            } else {
                r = fit(load_distribution(target, run), cfg);
            }
            run.seeds["restarts"] = restart_seeds(r);
            auto j = to_json(r);
            if (check) j["bound_check"] = {{"bound", check->bound}, {"tolerance", check->tolerance}, {"alarm", check->alarm}};
            open_output(out) << j.dump(2) << '\n';
            if (!checkpoint.empty()) {
                auto model = to_json(r.best_model);
                model["seed"] = r.restarts[r.best_restart].seed;
                model["objective"] = {{"kind", to_string(r.objective)}};
                if (maximize_w) model["objective"]["w"] = *maximize_w;
                open_output(checkpoint) << model.dump(2) << '\n';
                run.outputs.push_back(checkpoint);
            }
            summary(std::string(maximize_w ? "best f_w = " : "best distance = ") + fmt(r.best_value) + "  (restart " +
                    std::to_string(r.best_restart) + ", " + std::to_string(r.failed_restarts()) + " failed)");
            if (check && check->alarm) {
                std::cerr << "ALARM: " << check->message << '\n';
                code = kBoundAlarm;
            }
        } else if (run.command == "inequality") {
            if (search) {
                const auto cfg = search_flags.resolve(seed, threads);
                const auto ws = grid.empty() ? default_w_grid() : parse_list(grid, "--grid");
                BoundTable table{{kPublishedWeight, kPublishedBound, "published", std::nullopt}};
                json point_seeds = json::object();
                for (std::size_t k = 0; k < ws.size(); ++k) {
                    if (std::abs(ws[k] - kPublishedWeight) < 1e-12) continue;
                    auto c = cfg;
                    c.seed = derive_seed(seed, SeedStream::BoundSearch, k);
                    const auto r = maximize_inequality(ws[k], c);
                    table.push_back({ws[k], r.best_value, "lhv-search", c.seed});
                    point_seeds[fmt(ws[k], 17)] = c.seed;
                    summary("w = " + fmt(ws[k]) + "  max f_w = " + fmt(r.best_value));
                }
                std::sort(table.begin(), table.end(), [](const auto& a, const auto& b) { return a.w < b.w; });
                run.seeds["points"] = point_seeds;
                auto os = open_output(out);
                write_bound_table(os, table);
            } else {
                const auto p = load_distribution(target, run);
                const auto pe = elegant_distribution();
                if (sweep) {
                    const auto rows = sweep_w(p, load_bounds(bounds_path, run), pe);
                    auto os = open_output(out);
                    write_sweep_csv(os, rows);
                    const SweepRow* peak = nullptr;
                    bool violated = false;
                    for (const auto& row : rows) {
                        violated = violated || row.report.verdict == Verdict::Violated;
                        if (!std::isnan(row.ratio_vs_elegant) && (!peak || row.ratio_vs_elegant > peak->ratio_vs_elegant)) {
                            peak = &row;
                        }
                    }
                    if (peak) summary("peak ratio " + fmt(peak->ratio_vs_elegant) + " at w = " + fmt(peak->report.w));
                    code = violated ? kViolated : kOk;
                } else {
                    std::optional<double> b = bound_override;
                    if (!b) b = lookup_bound(load_bounds(bounds_path, run), w);
                    if (!b) throw ValidationError("no bound for w = " + fmt(w, 17) + "; pass --bound");
                    const auto r = evaluate(p, w, *b);
                    json j{{"w", r.w},         {"s111", r.s111},     {"delta", r.delta},
                           {"f_value", r.f_value}, {"bound", r.bound}, {"margin", r.margin},
                           {"verdict", to_string(r.verdict)}};
                    if (!out.empty()) open_output(out) << j.dump(2) << '\n';
                    summary(std::string(to_string(r.verdict)) + "  margin = " + fmt(r.margin, 10));
                    code = r.verdict == Verdict::Violated ? kViolated : kOk;
                }
            }
        } else if (run.command == "visibility") {
            const auto cfg = vis_flags.resolve(seed, threads);
            const auto grid_nus = nus.empty() ? default_visibility_grid() : parse_list(nus, "--nus");
            const auto win = parse_list(window, "--window");
            if (win.size() != 2) throw ValidationError("--window needs two values");
            auto curve = visibility_sweep(load_distribution(target, run), grid_nus, cfg);
            json point_seeds = json::array();
            for (const auto& pt : curve.points) point_seeds.push_back({{"nu", pt.nu}, {"seed", pt.seed}});
            run.seeds["points"] = point_seeds;
            {
                auto os = open_output(out);
                write_curve_csv(os, curve);
            }
            if (fit_out.empty()) fit_out = out + ".fit.json";
            json fj;
            try {
                curve.fit = critical_visibility(curve, win[0], win[1]);
                fj = to_json(*curve.fit);
                summary("critical visibility ~ " + fmt(curve.fit->x_intercept));
            } catch (const ComputationError& e) {
                fj = {{"error", e.what()}};
                std::cerr << "warning: " << e.what() << '\n';
            }
            open_output(fit_out) << fj.dump(2) << '\n';
            run.outputs.push_back(fit_out);
        } else if (run.command == "resample") {
            const auto counts = load_counts(counts_path, run);
            Statistic stat;
            if (statistic == "s111") {
                stat = [](const TriangleDistribution& p, std::uint64_t) { return s111(p); };
            } else if (statistic == "delta") {
                stat = [](const TriangleDistribution& p, std::uint64_t) { return delta(p); };
            } else if (statistic == "f_w") {
                validate_weight(w);
                stat = [w](const TriangleDistribution& p, std::uint64_t) { return f_w(p, w); };
            } else if (statistic == "distance") {
                auto cfg = res_flags.resolve(seed, 1);
                stat = [cfg](const TriangleDistribution& p, std::uint64_t s) {
                    auto c = cfg;
                    c.seed = s;
                    return fit(p, c).best_value;
                };
            } else {
                throw ValidationError("unknown statistic '" + statistic + "' (expected s111, delta, f_w or distance)");
            }
            const int workers = threads > 0 ? threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
            const auto rep = poisson_resample(counts, replicates, stat, seed, statistic, workers);
            run.seeds["replicates"] = rep.replicate_seeds;
            auto j = to_json(rep);
            j["point_estimate"] = stat(normalize(counts), seed);
            open_output(out) << j.dump(2) << '\n';
            summary(statistic + " = " + fmt(j["point_estimate"].get<double>()) + " +- " + fmt(rep.std) + "  (" +
                    std::to_string(rep.failures.size()) + " failed replicates)");
        } else if (run.command == "synth") {
            auto t = synthesize_experiment(load_distribution(target, run), events, nu, seed);
            t.label = label;
            auto os = open_output(out);
            if (has_extension(out, ".csv")) {
                write_counts_csv(os, t);
            } else {
                os << to_json(t).dump(2) << '\n';
            }
            summary("total = " + std::to_string(t.total()) + "  s111 = " + fmt(s111(normalize(t))));
        }
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const ComputationError& e) {
        std::cerr << "computation failed: " << e.what() << '\n';
        return kComputation;
    }

    if (!out.empty()) {
        run.outputs.insert(run.outputs.begin(), out);
        const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
        run.write_manifest(out, elapsed.count());
    }
    return code;
}
