// pcid: run identification scenarios and write their traces, metrics and plot data.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pcid/config.hpp"
#include "pcid/harness.hpp"
#include "pcid/io.hpp"
#include "pcid/kernels.hpp"
#include "pcid/rng.hpp"

namespace fs = std::filesystem;
using pcid::Json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitIo = 4;

struct Common {
    std::string scenario;
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> sets;
    std::optional<std::size_t> decimate;
    std::string law;
};

/// Prints the machine-readable failure record to stderr and, when possible,
/// into <out>/error.json.
int fail(int code, const std::string& kind, const std::vector<std::string>& messages, const std::string& out_dir,
         double time = NAN) {
    Json j{{"error", kind}, {"exit_code", code}, {"messages", messages}};
    if (std::isfinite(time)) {
        j["time"] = time;
    }
    std::cerr << j.dump() << '\n';
    if (!out_dir.empty() && code != kExitIo) {
        std::error_code ec;
        fs::create_directories(out_dir, ec);
        std::ofstream f(fs::path(out_dir) / "error.json", std::ios::binary);
        if (f) {
            f << j.dump(2) << '\n';
        }
    }
    return code;
}

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return (v != nullptr && *v != '\0') ? std::string(v) : fallback;
}

void apply_law(pcid::LawSet& laws, const std::string& law) {
    if (law.empty()) {
        return;
    }
    const bool all = law == "all";
    laws.proposed = true;
    laws.gradient = all || law == "gradient";
    laws.concurrent = all || law == "concurrent";
    laws.purging = all || law == "purging";
    laws.efficient_drem = all || law == "efficient_drem";
}

/// Layers: preset, file, --set, then the dedicated flags and env vars.
pcid::ResolvedConfig resolve(const Common& c, std::optional<std::uint64_t> seed_override = std::nullopt) {
    std::vector<std::string> overrides;
    if (!c.scenario.empty()) {
        overrides.push_back("scenario=\"" + c.scenario + "\"");
    }
    overrides.insert(overrides.end(), c.sets.begin(), c.sets.end());
    std::optional<std::uint64_t> seed = seed_override ? seed_override : c.seed;
    if (!seed) {
        const std::string env = env_or("PCID_SEED", "");
        if (!env.empty()) {
            try {
                std::size_t pos = 0;
                seed = std::stoull(env, &pos);
                if (pos != env.size()) {
                    throw std::invalid_argument("trailing characters");
                }
            } catch (const std::exception&) {
                throw pcid::ConfigError(pcid::ConfigError::Kind::parse, {"PCID_SEED is not an integer: " + env});
            }
        }
    }
    if (seed) {
        overrides.push_back("seed=" + std::to_string(*seed));
    }
    if (c.decimate) {
        overrides.push_back("decimate=" + std::to_string(*c.decimate));
    }
    if (!c.law.empty()) {
        pcid::LawSet l;
        apply_law(l, c.law);
        overrides.push_back("laws.gradient=" + std::string(l.gradient ? "true" : "false"));
        overrides.push_back("laws.concurrent=" + std::string(l.concurrent ? "true" : "false"));
        overrides.push_back("laws.purging=" + std::string(l.purging ? "true" : "false"));
        overrides.push_back("laws.efficient_drem=" + std::string(l.efficient_drem ? "true" : "false"));
    }
    return pcid::load_config(c.config_path, overrides);
}

int config_failure(const pcid::ConfigError& e, const std::string& out_dir) {
    const int code = e.kind() == pcid::ConfigError::Kind::file ? kExitIo : kExitConfig;
    return fail(code, std::string("config_") + pcid::ConfigError::kind_name(e.kind()), e.problems(), out_dir);
}

/// Runs one resolved config into `dir`. Returns the exit code.
int run_one(const pcid::ResolvedConfig& rc, const fs::path& dir, pcid::RunResult* keep = nullptr) {
    pcid::RunResult res = pcid::run_experiment(rc.scenario);
    try {
        pcid::write_artifacts(dir, res, rc.decimate, pcid::to_json(rc));
    } catch (const pcid::IoError& e) {
        return fail(kExitIo, "io", {e.what()}, "");
    }
    int code = kExitOk;
    if (res.error) {
        code = fail(kExitDivergence, "divergence", {res.error->message}, dir.string(), res.error->time);
    }
    if (keep != nullptr) {
        *keep = std::move(res);
    }
    return code;
}

int cmd_run(const Common& c) {
    const std::string out = c.out_dir.empty() ? env_or("PCID_OUT", "out") : c.out_dir;
    pcid::ResolvedConfig rc;
    try {
        rc = resolve(c);
    } catch (const pcid::ConfigError& e) {
        return config_failure(e, out);
    }
    pcid::RunResult res;
    const int code = run_one(rc, out, &res);
    const pcid::MetricsReport& m = res.metrics;
    std::cout << m.scenario << " seed " << m.seed << ": " << m.steps << " steps, " << m.events.size()
              << " events, " << m.false_alarm_times.size() << " unmatched, wrote " << out << '\n';
    return code;
}

std::vector<std::uint64_t> parse_seeds(const std::string& spec) {
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(spec);
    std::string part;
    while (std::getline(ss, part, ',')) {
        const auto dash = part.find('-');
        if (dash == std::string::npos) {
            seeds.push_back(std::stoull(part));
        } else {
            const std::uint64_t a = std::stoull(part.substr(0, dash));
            const std::uint64_t b = std::stoull(part.substr(dash + 1));
            if (b < a) {
                throw std::invalid_argument("descending range " + part);
            }
            for (std::uint64_t s = a; s <= b; ++s) {
                seeds.push_back(s);
            }
        }
    }
    if (seeds.empty()) {
        throw std::invalid_argument("no seeds");
    }
    return seeds;
}

int cmd_sweep(const Common& c, const std::string& seed_spec, unsigned jobs) {
    const std::string out = c.out_dir.empty() ? env_or("PCID_OUT", "out") : c.out_dir;
    std::vector<std::uint64_t> seeds;
    try {
        seeds = parse_seeds(seed_spec);
    } catch (const std::exception& e) {
        return fail(kExitConfig, "config_parse", {std::string("--seeds: ") + e.what()}, out);
    }
    std::vector<pcid::ResolvedConfig> configs;
    try {
        for (std::uint64_t s : seeds) {
            configs.push_back(resolve(c, s));
        }
    } catch (const pcid::ConfigError& e) {
        return config_failure(e, out);
    }

    struct Row {
        int code = kExitOk;
        pcid::MetricsReport metrics;
        std::string error;
    };
    std::vector<Row> rows(configs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t i = next++; i < configs.size(); i = next++) {
            const fs::path dir = fs::path(out) / ("seed_" + std::to_string(seeds[i]));
            pcid::RunResult res;
            rows[i].code = run_one(configs[i], dir, &res);
            rows[i].metrics = std::move(res.metrics);
            if (res.error) {
                rows[i].error = res.error->message;
            }
        }
    };
    const unsigned n_workers =
        std::max(1u, std::min<unsigned>(jobs == 0 ? std::thread::hardware_concurrency() : jobs,
                                        static_cast<unsigned>(configs.size())));
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < n_workers; ++w) {
        pool.emplace_back(worker);
    }
    for (auto& t : pool) {
        t.join();
    }

    const fs::path summary = fs::path(out) / "summary.csv";
    std::ofstream f(summary, std::ios::binary);
    if (!f) {
        return fail(kExitIo, "io", {"cannot write " + summary.string()}, "");
    }
    f << "seed,exit_code,events,unmatched_events,switches_detected,switches,terminal_error,runtime_s\n";
    int worst = kExitOk;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const pcid::MetricsReport& m = rows[i].metrics;
        std::size_t detected = 0;
        for (const auto& s : m.switches) {
            detected += s.detected ? 1 : 0;
        }
        const double term = m.intervals.empty() ? NAN : m.intervals.back().terminal_error;
        f << seeds[i] << ',' << rows[i].code << ',' << m.events.size() << ',' << m.false_alarm_times.size() << ','
          << detected << ',' << m.switches.size() << ',' << pcid::format_double(term) << ','
          << pcid::format_double(m.runtime_s) << '\n';
        worst = std::max(worst, rows[i].code);
    }
    std::cout << "swept " << rows.size() << " seeds with " << n_workers << " workers, wrote " << summary.string()
              << '\n';
    return worst;
}

// --------------------------------------------------------------------------
// verify: the invariant suite on small instances

struct Check {
    std::string name;
    bool pass = false;
    std::string detail;
};

Check check_adjugate() {
    pcid::SplitMix64 rng(7);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + static_cast<std::size_t>(trial % 4);
        pcid::Matrix m(n, n);
        for (double& v : m.entries()) {
            v = rng.uniform(-1.0, 1.0);
        }
        const pcid::Matrix lhs = pcid::adjugate(m) * m;
        const pcid::Matrix rhs = pcid::Matrix::identity(n) * pcid::determinant(m);
        worst = std::max(worst, (lhs - rhs).max_abs());
    }
    return {"adj(M) M = det(M) I", worst < 1e-9, "max dev " + pcid::format_double(worst)};
}

Check check_min_eigenvalue() {
    pcid::SplitMix64 rng(11);
    double worst = -INFINITY;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + static_cast<std::size_t>(trial % 4);
        pcid::Matrix a(n, n);
        for (double& v : a.entries()) {
            v = rng.uniform(-1.0, 1.0);
        }
        const pcid::Matrix s = (a + a.transpose()) * 0.5;
        const double lam = pcid::min_eigenvalue(s);
        for (int k = 0; k < 10; ++k) {
            pcid::Matrix x(n, 1);
            for (double& v : x.entries()) {
                v = rng.uniform(-1.0, 1.0);
            }
            const double q = (x.transpose() * s * x)(0, 0) / (x.transpose() * x)(0, 0);
            worst = std::max(worst, lam - q);
        }
    }
    return {"lambda_min <= Rayleigh quotient", worst <= 1e-12, "max excess " + pcid::format_double(worst)};
}

pcid::ScenarioConfig short_run() {
    pcid::ScenarioConfig c = pcid::preset(pcid::ScenarioKind::simple_noise_free);
    c.horizon = 0.7;
    return c;
}

Check check_determinism() {
    const pcid::RunResult a = pcid::run_experiment(short_run());
    const pcid::RunResult b = pcid::run_experiment(short_run());
    std::ostringstream sa;
    std::ostringstream sb;
    pcid::write_trace_csv(sa, a.trace, 1);
    pcid::write_trace_csv(sb, b.trace, 1);
    return {"identical config gives identical trace", sa.str() == sb.str(), std::to_string(a.trace.rows()) + " rows"};
}

Check check_residual_zero() {
    const pcid::RunResult r = pcid::run_experiment(short_run());
    const auto t = r.trace.column("t");
    const auto e = r.trace.column("residual_norm");
    const auto s = r.trace.column("residual_scale");
    double worst = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] < 0.5 && s[i] > 0.0) {
            worst = std::max(worst, e[i] / s[i]);
        }
    }
    return {"residual vanishes on a constant segment", worst < 1e-12, "max scaled " + pcid::format_double(worst)};
}

Check check_delta_nonnegative() {
    const pcid::RunResult r = pcid::run_experiment(short_run());
    const double m = r.metrics.min_delta;
    return {"det(omega) >= 0", m >= -1e-18, "min " + pcid::format_double(m)};
}

Check check_law_forms() {
    const pcid::RunResult r = pcid::run_experiment(short_run());
    const double gap = r.metrics.law_form_gap_max;
    return {"direct and filter law forms agree", gap < 1e-10, "max gap " + pcid::format_double(gap)};
}

Check check_detection() {
    const pcid::RunResult r = pcid::run_experiment(short_run());
    const bool ok = r.metrics.events.size() == 1 && r.metrics.false_alarm_times.empty() &&
                    std::abs(r.metrics.events[0].t_hat - 0.6) < 1e-9;
    return {"one switch, one reset at 0.6", ok, std::to_string(r.metrics.events.size()) + " events"};
}

int cmd_verify() {
    const std::vector<Check> checks{check_adjugate(),      check_min_eigenvalue(),    check_determinism(),
                                    check_residual_zero(), check_delta_nonnegative(), check_law_forms(),
                                    check_detection()};
    std::size_t width = 0;
    for (const auto& c : checks) {
        width = std::max(width, c.name.size());
    }
    bool all = true;
    for (const auto& c : checks) {
        std::cout << (c.pass ? "PASS  " : "FAIL  ") << c.name << std::string(width - c.name.size() + 2, ' ')
                  << c.detail << '\n';
        all = all && c.pass;
    }
    return all ? kExitOk : kExitVerifyFailed;
}

int cmd_list() {
    const std::vector<std::pair<pcid::ScenarioKind, const char*>> list{
        {pcid::ScenarioKind::simple_noise_free, "two-parameter regression, switches at 0.5 and 1.0, exact detector"},
        {pcid::ScenarioKind::simple_noise, "same switches, bounded uniform noise, robust detector"},
        {pcid::ScenarioKind::simple_harmonic, "same switches, noise plus a 25 rad/s harmonic, robust detector"},
        {pcid::ScenarioKind::switched_plant, "second-order plant switching at 5 and 10 s under state feedback"},
        {pcid::ScenarioKind::custom, "user-defined; starts from the noise-free defaults"},
    };
    for (const auto& [k, text] : list) {
        const pcid::ScenarioConfig c = pcid::preset(k);
        std::cout << pcid::to_string(k) << "\thorizon " << c.horizon << " s\t" << text << '\n';
    }
    return kExitOk;
}

void add_common(CLI::App* sub, Common& c, bool with_seed) {
    sub->add_option("scenario", c.scenario, "Preset name (see list-scenarios)");
    sub->add_option("--config", c.config_path, "JSON config file");
    sub->add_option("--out", c.out_dir, "Output directory (env PCID_OUT, default ./out)");
    if (with_seed) {
        sub->add_option("--seed", c.seed, "RNG seed (env PCID_SEED)");
    }
    sub->add_option("--set", c.sets, "Override key=value, dotted keys for nested fields (repeatable)");
    sub->add_option("--decimate", c.decimate, "Write every N-th trace row (default 100)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--law", c.law, "Laws to run next to the proposed one")
        ->check(CLI::IsMember({"proposed", "gradient", "concurrent", "purging", "efficient_drem", "all"}));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Piecewise-constant parameter identification experiments"};
    app.require_subcommand(1);

    Common run_opts;
    CLI::App* run = app.add_subcommand("run", "Run one scenario and write its artifacts");
    add_common(run, run_opts, true);

    Common sweep_opts;
    std::string seeds = "1-20";
    unsigned jobs = 0;
    CLI::App* sweep = app.add_subcommand("sweep", "Run one scenario over many seeds");
    add_common(sweep, sweep_opts, false);
    sweep->add_option("--seeds", seeds, "Seed list such as 1-20 or 1,4,9");
    sweep->add_option("--jobs", jobs, "Worker threads (0: one per core)");

    CLI::App* verify = app.add_subcommand("verify", "Run the invariant suite on small instances");
    CLI::App* list = app.add_subcommand("list-scenarios", "List the built-in presets");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return fail(kExitConfig, "usage", {e.what()}, "");
    }

    try {
        if (*run) {
            return cmd_run(run_opts);
        }
        if (*sweep) {
            return cmd_sweep(sweep_opts, seeds, jobs);
        }
        if (*verify) {
            return cmd_verify();
        }
        if (*list) {
            return cmd_list();
        }
    } catch (const pcid::ContractError& e) {
        return fail(kExitConfig, "contract", {e.what()}, "");
    } catch (const std::exception& e) {
        return fail(kExitIo, "internal", {e.what()}, "");
    }
    return kExitOk;
}
