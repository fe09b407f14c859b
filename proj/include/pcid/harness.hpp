#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pcid/adaptive_law.hpp"
#include "pcid/baselines.hpp"
#include "pcid/detection.hpp"
#include "pcid/drem.hpp"
#include "pcid/errors.hpp"
#include "pcid/kernels.hpp"
#include "pcid/matrix.hpp"
#include "pcid/signals.hpp"

namespace pcid {

enum class ScenarioKind { simple_noise_free, simple_noise, simple_harmonic, switched_plant, custom };
enum class DetectorKind { exact, robust };

inline const char* to_string(ScenarioKind k) {
    switch (k) {
        case ScenarioKind::simple_noise_free: return "simple_noise_free";
        case ScenarioKind::simple_noise: return "simple_noise";
        case ScenarioKind::simple_harmonic: return "simple_harmonic";
        case ScenarioKind::switched_plant: return "switched_plant";
        case ScenarioKind::custom: return "custom";
    }
    return "custom";
}

inline std::optional<ScenarioKind> scenario_from_string(const std::string& s) {
    for (ScenarioKind k : {ScenarioKind::simple_noise_free, ScenarioKind::simple_noise, ScenarioKind::simple_harmonic,
                           ScenarioKind::switched_plant, ScenarioKind::custom}) {
        if (s == to_string(k)) {
            return k;
        }
    }
    return std::nullopt;
}

/// One entry of a scalar-output regressor: a, a e^{-b t}, a sin(b t) or a cos(b t).
struct RegressorTerm {
    enum class Type { constant, exp, sin, cos };
    Type type = Type::constant;
    double a = 1.0;
    double b = 0.0;

    [[nodiscard]] double at(double t) const {
        switch (type) {
            case Type::constant: return a;
            case Type::exp: return a * std::exp(-b * t);
            case Type::sin: return a * std::sin(b * t);
            case Type::cos: return a * std::cos(b * t);
        }
        return 0.0;
    }
};

struct EstimatorParams {
    double sigma = 5.0;
    double k = 100.0;
    double gamma0 = 10.0;
    double rho = 1e-19;
    double delta_pr = 0.1;
    DetectorKind detector = DetectorKind::exact;
    double eta_rel = 1e-9;
    double eta_abs = 0.0;
    double eta_floor = 10.0;   // multiples of the residual rounding floor added to eta
    std::size_t window = 500;
    std::size_t min_fill = 0;  // 0: wait for a full window after each reset
    double spread_coeff = 0.9;
    double w_max = 0.0;
};

struct PlantParams {
    std::vector<Matrix> a;  // per model, n_x x n_x
    std::vector<Matrix> b;  // per model, n_x x m_u
    Matrix x0;
    Matrix kx;
    Matrix kr;
    Reference r;
    double l = 1.0;
    DecayMode decay = DecayMode::euler;
};

struct GradientParams {
    double gain = 100.0;
};

struct ConcurrentParams {
    double gamma1 = 100.0;
    double gamma2 = 5000.0;
    std::vector<std::vector<double>> record_times;  // per model
};

struct PurgingParams {
    double gamma = 100.0;
    double c1 = 1.0;
    double c2 = 1.0;
    double c3 = 1e-6;
    std::size_t stack_len = 10;
    std::size_t spacing_steps = 10;
};

struct EfficientDremParams {
    double l0 = 100.0;
    double lambda_lb = 1e-6;
    double lambda_ub = 1e-3;
    double gamma0 = 1e11;
    bool reset_at_true_switches = false;
};

struct LawSet {
    bool proposed = true;
    bool gradient = false;
    bool concurrent = false;
    bool purging = false;
    bool efficient_drem = false;

    [[nodiscard]] bool any_baseline() const noexcept { return gradient || concurrent || purging || efficient_drem; }
};

struct ScenarioConfig {
    ScenarioKind kind = ScenarioKind::simple_noise_free;
    double t0 = 0.0;
    double horizon = 2.0;
    double dt = 1e-4;
    std::uint64_t seed = 1;
    EstimatorParams est;
    std::vector<Matrix> models;                        // parameter per model label (regression scenarios)
    std::vector<std::pair<std::size_t, double>> sequence;  // (model label, start time)
    std::vector<RegressorTerm> regressor;
    DisturbanceSpec disturbance;
    std::optional<PlantParams> plant;
    Matrix theta0;  // empty means zero
    LawSet laws;
    GradientParams gradient;
    ConcurrentParams concurrent;
    PurgingParams purging;
    EfficientDremParams efficient_drem;
    double excitation_fraction = 0.5;  // T_i: first time the Gram integral reaches this share of its segment total
    double settle = -1.0;              // rate-fit offset after a reset; negative means 5 / k
    double bound_settle = -1.0;        // disturbance-bound check offset; negative means 10 / gamma0

    [[nodiscard]] double settle_time() const { return settle >= 0.0 ? settle : 5.0 / est.k; }
    [[nodiscard]] double bound_settle_time() const { return bound_settle >= 0.0 ? bound_settle : 10.0 / est.gamma0; }
    [[nodiscard]] bool is_plant() const noexcept { return plant.has_value(); }

    /// Every violated invariant, not just the first.
    [[nodiscard]] std::vector<std::string> validate() const {
        std::vector<std::string> v;
        auto need = [&v](bool ok, const std::string& msg) {
            if (!ok) {
                v.push_back(msg);
            }
        };
        need(dt > 0.0 && std::isfinite(dt), "dt must be positive");
        need(horizon >= 0.0 && std::isfinite(horizon), "horizon must be non-negative");
        need(est.delta_pr >= 0.0, "delta_pr must be non-negative");
        need(est.rho > 0.0, "rho must be positive");
        need(est.k > 0.0, "k must be positive");
        need(est.gamma0 > 0.0, "gamma0 must be positive");
        need(est.gamma0 <= est.k, "gamma0 must not exceed k");
        need(est.sigma >= 0.0, "sigma must be non-negative");
        need(est.window >= 2, "window must hold at least 2 samples");
        need(est.min_fill == 0 || (est.min_fill >= 2 && est.min_fill <= est.window),
             "min_fill must be 0 or lie in [2, window]");
        need(est.eta_rel >= 0.0 && est.eta_abs >= 0.0 && est.eta_floor >= 0.0,
             "eta_rel, eta_abs and eta_floor must be non-negative");
        need(est.w_max >= 0.0, "w_max must be non-negative");
        need(excitation_fraction > 0.0 && excitation_fraction <= 1.0, "excitation_fraction must lie in (0, 1]");
        need(!sequence.empty(), "sequence must contain at least one segment");
        if (!sequence.empty()) {
            need(std::abs(sequence.front().second - t0) <= 1e-12, "first sequence entry must start at t0");
            for (std::size_t i = 1; i < sequence.size(); ++i) {
                need(sequence[i].second > sequence[i - 1].second, "sequence start times must strictly increase");
            }
            if (sequence.size() > 1) {
                double tmin = INFINITY;
                for (std::size_t i = 1; i < sequence.size(); ++i) {
                    tmin = std::min(tmin, sequence[i].second - sequence[i - 1].second);
                }
                need(est.delta_pr < tmin, "delta_pr must be smaller than the shortest dwell time");
            }
        }
        const std::size_t n_models = plant ? plant->a.size() : models.size();
        for (const auto& [label, start] : sequence) {
            need(label < n_models, "sequence refers to model " + std::to_string(label) + " which is not defined");
            (void)start;
        }
        if (plant) {
            need(!plant->a.empty() && plant->a.size() == plant->b.size(), "plant needs matching A and B lists");
            need(plant->l > 0.0, "plant.l must be positive");
            need(plant->x0.cols() == 1 && plant->x0.rows() > 0, "plant.x0 must be a column vector");
            const std::size_t nx = plant->x0.rows();
            const std::size_t mu = plant->kx.rows();
            for (std::size_t j = 0; j < plant->a.size(); ++j) {
                need(plant->a[j].rows() == nx && plant->a[j].cols() == nx, "plant.A[" + std::to_string(j) + "] must be n_x x n_x");
                if (j < plant->b.size()) {
                    need(plant->b[j].rows() == nx && plant->b[j].cols() == mu,
                         "plant.B[" + std::to_string(j) + "] must be n_x x m_u");
                }
            }
            need(plant->kx.cols() == nx, "plant.Kx must be m_u x n_x");
            need(plant->kr.rows() == mu && plant->kr.cols() == mu, "plant.Kr must be m_u x m_u");
            need(plant->r.offset.rows() == mu, "plant.r must have m_u entries");
            need(!laws.any_baseline(), "baseline laws are only available for regression scenarios");
            need(disturbance.kind == DisturbanceKind::none, "plant scenarios take no additive disturbance");
        } else {
            need(!models.empty(), "models must not be empty");
            need(!regressor.empty(), "regressor must have at least one entry");
            for (std::size_t j = 0; j < models.size(); ++j) {
                need(models[j].rows() == regressor.size(),
                     "models[" + std::to_string(j) + "] must have one row per regressor entry");
                need(models[j].cols() == models.front().cols(), "all models must share one shape");
            }
            if (disturbance.kind != DisturbanceKind::none) {
                const double bound = disturbance.noise_amplitude +
                                     (disturbance.kind == DisturbanceKind::uniform_plus_harmonic
                                          ? std::abs(disturbance.harmonic_amplitude)
                                          : 0.0);
                const double width = models.empty() ? 1.0 : std::sqrt(static_cast<double>(models.front().cols()));
                need(bound * width <= disturbance.w_max, "disturbance amplitude exceeds its declared bound w_max");
            }
            if (laws.concurrent) {
                need(concurrent.record_times.size() == models.size(), "concurrent.record_times needs one list per model");
            }
            if (laws.efficient_drem) {
                need(efficient_drem.lambda_lb < efficient_drem.lambda_ub, "efficient_drem needs lambda_lb < lambda_ub");
            }
            if (laws.purging) {
                need(purging.stack_len >= 1, "purging.stack_len must be positive");
            }
        }
        return v;
    }
};

// --------------------------------------------------------------------------
// Presets

namespace detail {

inline ScenarioConfig simple_base() {
    ScenarioConfig c;
    c.models = {Matrix::column({-2.0, 1.0}), Matrix::column({-4.0, 2.0})};
    c.sequence = {{0, 0.0}, {1, 0.5}, {0, 1.0}};
    c.regressor = {{RegressorTerm::Type::constant, 1.0, 0.0}, {RegressorTerm::Type::exp, 1.0, 1.0}};
    c.concurrent.record_times = {{0.05, 0.1}, {0.55, 0.6}};
    return c;
}

}  // namespace detail

inline ScenarioConfig preset(ScenarioKind kind) {
    ScenarioConfig c;
    switch (kind) {
        case ScenarioKind::simple_noise_free:
        case ScenarioKind::custom:
            c = detail::simple_base();
            c.horizon = 2.0;
            c.est = EstimatorParams{};
            break;
        case ScenarioKind::simple_noise:
        case ScenarioKind::simple_harmonic:
            c = detail::simple_base();
            c.horizon = 2.5;
            c.est.sigma = 25.0;
            c.est.delta_pr = 0.01;
            c.est.k = 100.0;
            c.est.rho = 2.5e-11;
            c.est.gamma0 = 10.0;
            c.est.detector = DetectorKind::robust;
            if (kind == ScenarioKind::simple_noise) {
                c.disturbance = {DisturbanceKind::uniform_noise, 0.5, 0.0, 0.0, 0.65, 0};
                c.est.w_max = 0.65;
                c.est.window = 500;
            } else {
                c.disturbance = {DisturbanceKind::uniform_plus_harmonic, 0.15, 0.1, 25.0, 0.25, 0};
                c.est.w_max = 0.25;
                // One period of the 25 rad/s harmonic, so the windowed mean averages it out.
                c.est.window = 2513;
            }
            break;
        case ScenarioKind::switched_plant: {
            c.horizon = 15.0;
            c.est.sigma = 5.0;
            c.est.k = 100.0;
            c.est.delta_pr = 0.1;
            c.est.rho = 1e-17;
            c.est.gamma0 = 10.0;
            c.sequence = {{0, 0.0}, {1, 5.0}, {0, 10.0}};
            PlantParams p;
            p.a = {Matrix::from_rows({{0, 1}, {-6, -8}}), Matrix::from_rows({{0, 1}, {-2, -4}})};
            p.b = {Matrix::column({0, 2}), Matrix::column({0, 4})};
            p.x0 = Matrix::column({-1, 0});
            p.kx = Matrix::from_rows({{-5, -4}});
            p.kr = Matrix::from_rows({{8}});
            p.r.kind = Reference::Kind::constant;
            p.r.offset = Matrix::column({1.0});
            p.r.amplitude = Matrix::column({0.0});
            p.l = 1.0;
            c.plant = p;
            break;
        }
    }
    c.kind = kind;
    return c;
}

// --------------------------------------------------------------------------
// Trace

/// Full-rate table of named columns, stored row-major.
class Trace {
public:
    Trace() = default;
    explicit Trace(std::vector<std::string> names) : names_(std::move(names)) {
        for (std::size_t i = 0; i < names_.size(); ++i) {
            index_[names_[i]] = i;
        }
    }

    void add_row(const std::vector<double>& row) {
        if (row.size() != names_.size()) {
            throw DimensionError("Trace::add_row: expected " + std::to_string(names_.size()) + " values");
        }
        data_.insert(data_.end(), row.begin(), row.end());
    }

    [[nodiscard]] const std::vector<std::string>& names() const noexcept { return names_; }
    [[nodiscard]] std::size_t rows() const noexcept { return names_.empty() ? 0 : data_.size() / names_.size(); }
    [[nodiscard]] std::size_t cols() const noexcept { return names_.size(); }
    [[nodiscard]] bool has(const std::string& name) const { return index_.count(name) != 0; }

    [[nodiscard]] std::size_t index_of(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) {
            throw DomainError("Trace: no column named '" + name + "'");
        }
        return it->second;
    }

    [[nodiscard]] double at(std::size_t row, std::size_t col) const { return data_[row * names_.size() + col]; }

    [[nodiscard]] std::vector<double> column(const std::string& name) const {
        const std::size_t c = index_of(name);
        std::vector<double> out(rows());
        for (std::size_t r = 0; r < out.size(); ++r) {
            out[r] = at(r, c);
        }
        return out;
    }

private:
    std::vector<std::string> names_;
    std::map<std::string, std::size_t> index_;
    std::vector<double> data_;
};

/// Column suffixes for an r x c matrix: "_i" for column vectors, "_i_j" otherwise.
inline std::vector<std::string> entry_names(const std::string& base, std::size_t rows, std::size_t cols) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            out.push_back(cols == 1 ? base + "_" + std::to_string(i)
                                    : base + "_" + std::to_string(i) + "_" + std::to_string(j));
        }
    }
    return out;
}

// --------------------------------------------------------------------------
// Diagnostics

/// Left-endpoint rule for the smallest eigenvalue of the integral of phi phi^T
/// over [t_a, t_b). `phi_cols` name the regressor columns of the trace.
inline double measure_excitation(const Trace& trace, const std::vector<std::string>& phi_cols, double t_a,
                                 double t_b) {
    if (!(t_b > t_a)) {
        throw DomainError("measure_excitation: empty window");
    }
    const std::size_t tc = trace.index_of("t");
    std::vector<std::size_t> pc;
    for (const auto& n : phi_cols) {
        pc.push_back(trace.index_of(n));
    }
    const std::size_t n = pc.size();
    Matrix gram(n, n);
    bool any = false;
    const std::size_t rows = trace.rows();
    for (std::size_t r = 0; r < rows; ++r) {
        const double t = trace.at(r, tc);
        if (t < t_a - 1e-12 || t >= t_b - 1e-12) {
            continue;
        }
        double h = 0.0;
        if (r + 1 < rows) {
            h = trace.at(r + 1, tc) - t;
        } else if (r > 0) {
            h = t - trace.at(r - 1, tc);
        }
        any = true;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                gram(i, j) += h * trace.at(r, pc[i]) * trace.at(r, pc[j]);
            }
        }
    }
    if (!any) {
        throw DomainError("measure_excitation: window holds no trace rows");
    }
    return min_eigenvalue(gram);
}

struct RateFit {
    std::optional<double> slope;  // empty when fewer than 10 usable points
    std::size_t points = 0;
};

/// Least-squares slope of log(err) against t over [t_a, t_b), using the
/// points up to the first one at or below `floor`.
inline RateFit fit_rate(const std::vector<double>& t, const std::vector<double>& err, double t_a, double t_b,
                        double floor = 0.0) {
    double st = 0, sl = 0, stt = 0, stl = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] < t_a || t[i] >= t_b) {
            continue;
        }
        if (!(err[i] > floor) || !std::isfinite(err[i])) {
            break;
        }
        const double l = std::log(err[i]);
        st += t[i];
        sl += l;
        stt += t[i] * t[i];
        stl += t[i] * l;
        ++n;
    }
    RateFit out;
    out.points = n;
    if (n < 10) {
        return out;
    }
    const double dn = static_cast<double>(n);
    const double denom = dn * stt - st * st;
    if (denom <= 0.0) {
        return out;
    }
    out.slope = (dn * stl - st * sl) / denom;
    return out;
}

// --------------------------------------------------------------------------
// Metrics

struct SwitchReport {
    double switch_time = 0.0;
    bool detected = false;
    double detect_time = NAN;
    double t_hat = NAN;
    double error = NAN;  // t_hat - switch_time
    double excitation = NAN;       // lambda_min of the Gram integral over the whole segment
    double excitation_time = NAN;  // T_i, measured from switch_time
    double residual_peak = NAN;    // max |eps| over [t_i, t_i + T_i]
    double residual_peak_scaled = NAN;
};

struct IntervalReport {
    double start = 0.0;  // reset instant (t0 for the first interval)
    double end = 0.0;    // next true switch or horizon
    bool detected = true;
    std::optional<double> rate;
    std::size_t rate_points = 0;
    double terminal_error = NAN;
    double terminal_rel_error = NAN;
    std::vector<double> terminal_block_rel_error;  // plant: A, B, x(t_hat) blocks
    double zero_branch_residual = NAN;  // max |eps| over [start, end)
    double zero_branch_scaled = NAN;
    double ub_ratio_max = NAN;  // max |theta~| / UB after bound settle, disturbed runs only
    double ub_median = NAN;     // median UB after the rate-fit settle, disturbed runs only
};

struct MetricsReport {
    std::string scenario;
    std::uint64_t seed = 0;
    std::size_t steps = 0;
    double runtime_s = 0.0;
    std::vector<SwitchReport> switches;
    std::vector<IntervalReport> intervals;
    std::vector<DetectionEvent> events;
    std::vector<double> false_alarm_times;
    double initial_excitation_time = NAN;  // T_0
    double min_delta = NAN;
    double min_omega_after_t0 = NAN;
    double law_form_gap_max = NAN;
    std::size_t gate_underflows = 0;
    std::map<std::string, std::vector<double>> reach_times;  // per law, per switch: first t with |theta~| < 0.05
    std::map<std::string, double> terminal_errors;           // per law at horizon
    std::size_t purges = 0;
    std::vector<double> purge_times;
};

struct RunError {
    std::string message;
    double time = NAN;
};

struct RunResult {
    Trace trace;
    MetricsReport metrics;
    std::optional<RunError> error;
    std::vector<std::string> phi_columns;
    std::vector<std::string> theta_columns;
    std::vector<std::string> theta_hat_columns;
};

inline constexpr double kReachTolerance = 0.05;

namespace detail {

inline Matrix regressor_at(const std::vector<RegressorTerm>& terms, double t) {
    Matrix phi(terms.size(), 1);
    for (std::size_t i = 0; i < terms.size(); ++i) {
        phi(i, 0) = terms[i].at(t);
    }
    return phi;
}

inline void append(std::vector<double>& row, const Matrix& m) {
    for (double v : m.entries()) {
        row.push_back(v);
    }
}

inline void append_names(std::vector<std::string>& names, const std::vector<std::string>& add) {
    names.insert(names.end(), add.begin(), add.end());
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a.entries()[i] - b.entries()[i]));
    }
    return m;
}

// Nearest-match pairing of events (by reset instant) to true switches, gap at most max_gap.
inline std::vector<std::optional<std::size_t>> pair_events(const std::vector<double>& switches,
                                                           const std::vector<DetectionEvent>& events,
                                                           double max_gap) {
    std::vector<std::optional<std::size_t>> match(switches.size());
    std::vector<bool> used(events.size(), false);
    for (std::size_t i = 0; i < switches.size(); ++i) {
        double best = INFINITY;
        for (std::size_t e = 0; e < events.size(); ++e) {
            if (used[e]) {
                continue;
            }
            const double gap = std::abs(events[e].t_hat - switches[i]);
            if (gap <= max_gap && gap < best) {
                best = gap;
                match[i] = e;
            }
        }
        if (match[i]) {
            used[*match[i]] = true;
        }
    }
    return match;
}

}  // namespace detail

// --------------------------------------------------------------------------
// Experiment

/// Runs one scenario on the shared fixed-step clock t_k = t0 + k dt,
/// k = 0 .. round(horizon / dt) - 1. Each step: apply a due reset, sample,
/// DREM, detection, smoothing and law, baselines, record, advance the plant.
inline RunResult run_experiment(const ScenarioConfig& cfg) {
    const auto problems = cfg.validate();
    if (!problems.empty()) {
        std::string msg = "invalid scenario:";
        for (const auto& p : problems) {
            msg += " " + p + ";";
        }
        throw ContractError(msg);
    }
    const auto wall0 = std::chrono::steady_clock::now();
    const double dt = cfg.dt;
    const std::size_t steps = static_cast<std::size_t>(std::llround(cfg.horizon / dt));
    const bool plant_mode = cfg.is_plant();

    // Ground truth.
    std::vector<Segment> segs;
    for (const auto& [label, start] : cfg.sequence) {
        if (plant_mode) {
            const PlantParams& pp = *cfg.plant;
            Matrix ab(pp.a[label].rows(), pp.a[label].cols() + pp.b[label].cols());
            for (std::size_t i = 0; i < ab.rows(); ++i) {
                for (std::size_t j = 0; j < pp.a[label].cols(); ++j) {
                    ab(i, j) = pp.a[label](i, j);
                }
                for (std::size_t j = 0; j < pp.b[label].cols(); ++j) {
                    ab(i, pp.a[label].cols() + j) = pp.b[label](i, j);
                }
            }
            segs.push_back({ab, start});
        } else {
            segs.push_back({cfg.models[label], start});
        }
    }
    const SwitchingSchedule schedule(segs);
    std::vector<std::size_t> labels;
    for (const auto& s : cfg.sequence) {
        labels.push_back(s.first);
    }
    const std::vector<double> switch_times = schedule.switch_times();

    std::optional<SwitchedPlant> plant;
    std::size_t n = 0, m = 1, p = 0;
    if (plant_mode) {
        const PlantParams& pp = *cfg.plant;
        plant = make_plant(schedule, pp.x0, pp.kx, pp.kr, pp.r, pp.l, pp.decay);
        n = pp.x0.rows() + pp.kx.rows() + 1;
        p = pp.x0.rows();
    } else {
        n = cfg.regressor.size();
        p = cfg.models.front().cols();
    }
    const RegressorFn regressor = [&cfg](double t) { return detail::regressor_at(cfg.regressor, t); };
    DisturbanceSpec dspec = cfg.disturbance;
    dspec.rng_seed = cfg.seed;
    Disturbance disturbance(dspec);
    const bool disturbed = !plant_mode && dspec.kind != DisturbanceKind::none;

    // Estimator chain.
    DremState drem = make_drem(n, m, p, cfg.est.sigma, cfg.t0);
    DetectorState det = make_detector(cfg.est.delta_pr, cfg.t0, cfg.est.window, 0.0, cfg.est.spread_coeff,
                                     cfg.est.min_fill);
    EstimatorState est = make_estimator(n, p, cfg.est.k, cfg.est.gamma0, cfg.est.rho, cfg.theta0);
    EstimatorState shadow = est;

    // Disturbance-only channel of the same filters (ground-truth oracle).
    Matrix zw(n, p);
    Matrix w_f(n, p);

    // Baselines.
    const std::size_t n_models = cfg.models.size();
    ModelBank grad;
    ModelBank cl;
    std::vector<DataStack> cl_stacks;
    std::vector<std::vector<bool>> cl_recorded;
    PurgingState purge;
    EfficientDremState edrem;
    if (cfg.laws.gradient) {
        grad = make_bank(n_models, n, p, Matrix::identity(n) * cfg.gradient.gain);
    }
    if (cfg.laws.concurrent) {
        cl = make_bank(n_models, n, p, Matrix::identity(n) * cfg.concurrent.gamma1);
        for (std::size_t j = 0; j < n_models; ++j) {
            const std::size_t cap = std::max<std::size_t>(1, cfg.concurrent.record_times[j].size());
            cl_stacks.emplace_back(cap, n);
            cl_recorded.emplace_back(cfg.concurrent.record_times[j].size(), false);
        }
    }
    if (cfg.laws.purging) {
        purge = make_purging(n, p, cfg.purging.stack_len, Matrix::identity(n) * cfg.purging.gamma, cfg.purging.c1,
                             cfg.purging.c2, cfg.purging.c3, static_cast<double>(cfg.purging.spacing_steps) * dt,
                             cfg.t0);
    }
    if (cfg.laws.efficient_drem) {
        edrem = make_efficient_drem(n, p, cfg.efficient_drem.l0, cfg.efficient_drem.lambda_lb,
                                    cfg.efficient_drem.lambda_ub, cfg.efficient_drem.gamma0);
    }

    // Columns.
    RunResult res;
    res.phi_columns = entry_names("phi", n, m);
    res.theta_columns = entry_names("theta", n, p);
    res.theta_hat_columns = entry_names("theta_hat", n, p);
    std::vector<std::string> names{"t", "kappa", "last_switch", "last_t_hat"};
    detail::append_names(names, res.theta_columns);
    detail::append_names(names, res.theta_hat_columns);
    detail::append_names(names, entry_names("theta_ft", n, p));
    detail::append_names(names, res.phi_columns);
    detail::append_names(names, entry_names("y", m, p));
    detail::append_names(names, entry_names("y_clean", m, p));
    for (const char* c : {"delta", "omega_f", "residual_norm", "residual_scale", "stat_lhs", "stat_rhs", "c_bound",
                          "theta_err", "ub", "law_form_gap"}) {
        names.emplace_back(c);
    }
    if (plant_mode) {
        detail::append_names(names, entry_names("x", p, 1));
    }
    const std::vector<std::pair<std::string, bool>> law_cols{{"grad", cfg.laws.gradient},
                                                             {"cl", cfg.laws.concurrent},
                                                             {"purge", cfg.laws.purging},
                                                             {"edrem", cfg.laws.efficient_drem}};
    for (const auto& [prefix, on] : law_cols) {
        if (on) {
            detail::append_names(names, entry_names(prefix, n, p));
            names.push_back(prefix + "_err");
        }
    }
    res.trace = Trace(names);

    MetricsReport& mr = res.metrics;
    mr.scenario = to_string(cfg.kind);
    mr.seed = cfg.seed;

    double min_delta = INFINITY;
    double law_gap = 0.0;
    double last_t_hat = cfg.t0;
    std::vector<double> row;
    row.reserve(names.size());
    std::size_t k = 0;
    double t = cfg.t0;

    try {
        for (k = 0; k < steps; ++k) {
            t = cfg.t0 + static_cast<double>(k) * dt;

            if (det.pending_reset_at && t >= *det.pending_reset_at - 0.5 * dt) {
                drem = reset(std::move(drem), t);
                det = on_reset(std::move(det));
                if (plant) {
                    plant = reset_plant_filter(std::move(*plant), t);
                }
                zw.set_zero();
                last_t_hat = t;
            }

            const std::size_t seg = schedule.index_at(t);
            const std::size_t kappa = labels[seg];
            RegressionSample smp;
            Matrix w(m, p);
            Matrix theta_true;
            if (plant) {
                smp = parameterize_plant(*plant, t);
                theta_true = plant->regression_theta(t);
            } else {
                smp = sample(schedule, regressor, disturbed ? &disturbance : nullptr, t, &w);
                theta_true = schedule.theta_at(t);
            }
            const Matrix y_clean = smp.phi.transpose() * theta_true;

            // DREM outputs at t, c(t) from the same (pre-advance) filter state.
            Matrix aux_now = drem.aux;
            Matrix omega_now = drem.omega;
            const double weight_now = drem.weight;
            const Matrix z_now = drem.z;
            auto [next_drem, out] = drem_step(std::move(drem), smp, dt);
            drem = std::move(next_drem);
            min_delta = std::min(min_delta, out.delta);

            DremState view;
            view.z = z_now;
            view.omega = omega_now;
            view.aux = aux_now;
            view.weight = weight_now;
            const double scale = residual_scale(view, out, smp);

            double stat_lhs = out.residual_norm;
            double stat_rhs = 0.0;
            double c_t = 0.0;
            std::optional<double> ev;
            if (cfg.est.detector == DetectorKind::exact) {
                det.threshold_eta = exact_threshold(cfg.est.eta_rel, cfg.est.eta_abs, scale) +
                                    cfg.est.eta_floor * residual_rounding_floor(view, smp);
                stat_rhs = det.threshold_eta;
                auto r = detect_step(std::move(det), out.residual_norm, t);
                det = std::move(r.first);
                ev = r.second;
            } else {
                c_t = c_bound(det, view, out.adj_omega, smp, cfg.est.w_max);
                auto r = robust_detect_step(std::move(det), out.residual_norm, c_t, t);
                det = std::move(r.first);
                ev = r.second;
                stat_lhs = det.window.mean();
                stat_rhs = det.spread_coeff * std::sqrt(det.window.variance()) + c_t;
            }
            (void)ev;

            est = smooth_step(std::move(est), out.upsilon, out.delta, dt);
            est = law_step(std::move(est), dt);
            shadow = smooth_step(std::move(shadow), out.upsilon, out.delta, dt);
            shadow = law_step_filter_form(std::move(shadow), dt);
            law_gap = std::max(law_gap, detail::max_abs_diff(est.theta_hat, shadow.theta_hat));

            double ub = NAN;
            if (disturbed) {
                const Matrix w_part = out.adj_omega * zw;
                w_f.add_scaled(w_part - w_f, cfg.est.k * dt);
                zw.add_scaled(smp.phi * w, dt * weight_now);
                ub = est.omega_f > 0.0 ? w_f.norm() / est.omega_f : INFINITY;
            }

            if (cfg.laws.gradient) {
                grad = gradient_step(std::move(grad), smp, kappa, dt);
            }
            if (cfg.laws.concurrent) {
                for (std::size_t j = 0; j < n_models; ++j) {
                    const auto& times = cfg.concurrent.record_times[j];
                    for (std::size_t q = 0; q < times.size(); ++q) {
                        if (!cl_recorded[j][q] && t >= times[q] - 0.5 * dt) {
                            cl_stacks[j].push({smp.phi, smp.y, t});
                            cl_recorded[j][q] = true;
                        }
                    }
                }
                cl = concurrent_step(std::move(cl), cl_stacks, Matrix::identity(n) * cfg.concurrent.gamma2, smp,
                                     kappa, dt);
            }
            if (cfg.laws.purging) {
                purge = purging_record(std::move(purge), smp);
                const std::size_t before = purge.purges;
                purge = purging_step(std::move(purge), smp, dt);
                if (purge.purges != before) {
                    mr.purge_times.push_back(t);
                }
            }
            if (cfg.laws.efficient_drem) {
                bool at_switch = false;
                if (cfg.efficient_drem.reset_at_true_switches) {
                    for (double ts : switch_times) {
                        at_switch = at_switch || std::abs(t - ts) < 0.5 * dt;
                    }
                }
                edrem = efficient_drem_step(std::move(edrem), smp, at_switch, dt);
            }

            row.clear();
            const double last_switch = schedule.segments()[seg].start;
            row.insert(row.end(), {t, static_cast<double>(kappa), last_switch, last_t_hat});
            detail::append(row, theta_true);
            detail::append(row, est.theta_hat);
            detail::append(row, ft_estimate(est));
            detail::append(row, smp.phi);
            detail::append(row, smp.y);
            detail::append(row, y_clean);
            const double theta_err = (est.theta_hat - theta_true).norm();
            row.insert(row.end(), {out.delta, est.omega_f, out.residual_norm, scale, stat_lhs, stat_rhs, c_t,
                                   theta_err, ub, law_gap});
            if (plant) {
                detail::append(row, plant->x);
            }
            if (cfg.laws.gradient) {
                const Matrix& e = grad.estimates[kappa];
                detail::append(row, e);
                row.push_back((e - theta_true).norm());
            }
            if (cfg.laws.concurrent) {
                const Matrix& e = cl.estimates[kappa];
                detail::append(row, e);
                row.push_back((e - theta_true).norm());
            }
            if (cfg.laws.purging) {
                detail::append(row, purge.theta_hat);
                row.push_back((purge.theta_hat - theta_true).norm());
            }
            if (cfg.laws.efficient_drem) {
                detail::append(row, edrem.theta_hat);
                row.push_back((edrem.theta_hat - theta_true).norm());
            }
            res.trace.add_row(row);

            if (plant) {
                plant = plant_step(std::move(*plant), t, dt);
            }
        }
    } catch (const DivergenceError& e) {
        res.error = RunError{e.what(), e.time()};
    } catch (const ContractError& e) {
        res.error = RunError{e.what(), t};
    }

    mr.steps = res.trace.rows();
    mr.events = det.events;
    mr.gate_underflows = est.gate_underflows;
    mr.law_form_gap_max = res.trace.rows() ? law_gap : NAN;
    mr.min_delta = res.trace.rows() ? min_delta : NAN;
    mr.purges = purge.purges;

    const std::size_t rows = res.trace.rows();
    if (rows == 0) {
        mr.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
        return res;
    }

    // Metrics on the full-rate trace.
    const Trace& tr = res.trace;
    const std::vector<double> tt = tr.column("t");
    const std::vector<double> err = tr.column("theta_err");
    const std::vector<double> resid = tr.column("residual_norm");
    const std::vector<double> rscale = tr.column("residual_scale");
    const std::vector<double> omega_f = tr.column("omega_f");
    const std::vector<double> ubc = tr.column("ub");
    const double t_end = tt.back() + dt;

    auto rows_in = [&tt](double a, double b) {
        const auto lo = std::lower_bound(tt.begin(), tt.end(), a - 1e-12);
        const auto hi = std::lower_bound(tt.begin(), tt.end(), b - 1e-12);
        return std::pair<std::size_t, std::size_t>(static_cast<std::size_t>(lo - tt.begin()),
                                                   static_cast<std::size_t>(hi - tt.begin()));
    };

    // Excitation time of each segment: first instant the Gram integral from
    // the segment start reaches the configured share of its segment total.
    std::vector<double> seg_starts{cfg.t0};
    seg_starts.insert(seg_starts.end(), switch_times.begin(), switch_times.end());
    std::vector<std::size_t> pcs;
    for (const auto& c : res.phi_columns) {
        pcs.push_back(tr.index_of(c));
    }
    std::vector<double> excitation(seg_starts.size(), NAN);
    std::vector<double> excitation_time(seg_starts.size(), NAN);
    for (std::size_t s = 0; s < seg_starts.size(); ++s) {
        const double a = seg_starts[s];
        const double b = s + 1 < seg_starts.size() ? seg_starts[s + 1] : t_end;
        if (a >= t_end) {
            continue;
        }
        auto [r0, r1] = rows_in(a, std::min(b, t_end));
        const std::size_t nn = pcs.size();
        Matrix gram(nn, nn);
        std::vector<double> lam;
        lam.reserve(r1 - r0);
        for (std::size_t r = r0; r < r1; ++r) {
            for (std::size_t i = 0; i < nn; ++i) {
                for (std::size_t j = 0; j < nn; ++j) {
                    gram(i, j) += dt * tr.at(r, pcs[i]) * tr.at(r, pcs[j]);
                }
            }
            lam.push_back(min_eigenvalue(gram));
        }
        if (lam.empty()) {
            continue;
        }
        excitation[s] = lam.back();
        const double target = cfg.excitation_fraction * lam.back();
        for (std::size_t q = 0; q < lam.size(); ++q) {
            if (lam[q] >= target && lam[q] > 0.0) {
                // Gram after row r0+q covers [a, t_{r0+q} + dt).
                excitation_time[s] = tt[r0 + q] + dt - a;
                break;
            }
        }
    }
    mr.initial_excitation_time = excitation_time[0];

    // Pairing.
    const double tmin = schedule.shortest_dwell();
    const double max_gap = std::isfinite(tmin) ? 0.5 * tmin : cfg.horizon;
    const auto match = detail::pair_events(switch_times, det.events, max_gap);
    std::vector<bool> matched(det.events.size(), false);
    for (std::size_t i = 0; i < switch_times.size(); ++i) {
        SwitchReport sr;
        sr.switch_time = switch_times[i];
        sr.excitation = excitation[i + 1];
        sr.excitation_time = excitation_time[i + 1];
        if (match[i]) {
            const DetectionEvent& e = det.events[*match[i]];
            matched[*match[i]] = true;
            sr.detected = true;
            sr.detect_time = e.detect_time;
            sr.t_hat = e.t_hat;
            sr.error = e.t_hat - sr.switch_time;
        }
        if (std::isfinite(sr.excitation_time)) {
            auto [r0, r1] = rows_in(sr.switch_time, sr.switch_time + sr.excitation_time);
            double peak = 0.0;
            double peak_s = 0.0;
            for (std::size_t r = r0; r < r1; ++r) {
                peak = std::max(peak, resid[r]);
                if (rscale[r] > 0.0) {
                    peak_s = std::max(peak_s, resid[r] / rscale[r]);
                }
            }
            sr.residual_peak = peak;
            sr.residual_peak_scaled = peak_s;
        }
        mr.switches.push_back(sr);
    }
    for (std::size_t e = 0; e < det.events.size(); ++e) {
        if (!matched[e]) {
            mr.false_alarm_times.push_back(det.events[e].detect_time);
        }
    }

    // Minimum Omega once the initial segment has been excited.
    if (std::isfinite(excitation_time[0])) {
        auto [r0, r1] = rows_in(cfg.t0 + excitation_time[0], t_end);
        double mo = INFINITY;
        for (std::size_t r = r0; r < r1; ++r) {
            mo = std::min(mo, omega_f[r]);
        }
        mr.min_omega_after_t0 = r1 > r0 ? mo : NAN;
    }

    // Per-interval reports.
    const std::size_t theta_first = tr.index_of(res.theta_columns.front());
    const std::size_t hat_first = tr.index_of(res.theta_hat_columns.front());
    for (std::size_t s = 0; s < seg_starts.size(); ++s) {
        if (seg_starts[s] >= t_end) {
            break;
        }
        IntervalReport ir;
        ir.end = s + 1 < seg_starts.size() ? std::min(seg_starts[s + 1], t_end) : t_end;
        if (s == 0) {
            ir.start = cfg.t0;
        } else if (match[s - 1]) {
            ir.start = det.events[*match[s - 1]].t_hat;
        } else {
            ir.detected = false;
            ir.start = seg_starts[s];
        }
        double theta_norm = 0.0;
        {
            const std::size_t r0 = rows_in(seg_starts[s], ir.end).first;
            for (std::size_t q = 0; q < n * p; ++q) {
                theta_norm += tr.at(r0, theta_first + q) * tr.at(r0, theta_first + q);
            }
            theta_norm = std::sqrt(theta_norm);
        }
        const double floor = 1e-8 * (1.0 + theta_norm);
        if (ir.detected) {
            const RateFit fit = fit_rate(tt, err, ir.start + cfg.settle_time(), ir.end, floor);
            ir.rate = fit.slope;
            ir.rate_points = fit.points;
        }
        auto [r0, r1] = rows_in(ir.start, ir.end);
        if (r1 > r0) {
            const std::size_t last = r1 - 1;
            ir.terminal_error = err[last];
            Matrix th(n, p);
            Matrix hat(n, p);
            for (std::size_t q = 0; q < n * p; ++q) {
                th.entries()[q] = tr.at(last, theta_first + q);
                hat.entries()[q] = tr.at(last, hat_first + q);
            }
            ir.terminal_rel_error = th.norm() > 0.0 ? (hat - th).norm() / th.norm() : NAN;
            if (plant_mode) {
                const std::size_t nx = cfg.plant->x0.rows();
                const std::size_t mu = cfg.plant->kx.rows();
                const std::size_t blocks[3][2] = {{0, nx}, {nx, mu}, {nx + mu, 1}};
                for (const auto& b : blocks) {
                    const Matrix tb = row_block(th, b[0], b[1]);
                    const Matrix hb = row_block(hat, b[0], b[1]);
                    ir.terminal_block_rel_error.push_back(tb.norm() > 0.0 ? (hb - tb).norm() / tb.norm() : NAN);
                }
            }
            double zb = 0.0;
            double zs = 0.0;
            for (std::size_t r = r0; r < r1; ++r) {
                zb = std::max(zb, resid[r]);
                if (rscale[r] > 0.0) {
                    zs = std::max(zs, resid[r] / rscale[r]);
                }
            }
            ir.zero_branch_residual = zb;
            ir.zero_branch_scaled = zs;
            if (disturbed) {
                auto [b0, b1] = rows_in(ir.start + cfg.bound_settle_time(), ir.end);
                double worst = b1 > b0 ? 0.0 : NAN;
                for (std::size_t r = b0; r < b1; ++r) {
                    worst = std::max(worst, err[r] / ubc[r]);
                }
                ir.ub_ratio_max = worst;
                auto [m0, m1] = rows_in(ir.start + cfg.settle_time(), ir.end);
                std::vector<double> ubs;
                for (std::size_t r = m0; r < m1; ++r) {
                    if (std::isfinite(ubc[r])) {
                        ubs.push_back(ubc[r]);
                    }
                }
                if (!ubs.empty()) {
                    auto mid = ubs.begin() + static_cast<std::ptrdiff_t>(ubs.size() / 2);
                    std::nth_element(ubs.begin(), mid, ubs.end());
                    ir.ub_median = *mid;
                }
            }
        }
        mr.intervals.push_back(ir);
    }

    // Time to reach the tolerance after each switch, per law.
    std::vector<std::pair<std::string, std::string>> laws{{"proposed", "theta_err"}};
    for (const auto& [prefix, on] : law_cols) {
        if (on) {
            laws.emplace_back(prefix, prefix + "_err");
        }
    }
    for (const auto& [law, col] : laws) {
        const std::vector<double> e = tr.column(col);
        std::vector<double> reach;
        for (std::size_t s = 0; s < seg_starts.size(); ++s) {
            const double a = seg_starts[s];
            const double b = s + 1 < seg_starts.size() ? seg_starts[s + 1] : t_end;
            auto [r0, r1] = rows_in(a, std::min(b, t_end));
            double hit = NAN;
            for (std::size_t r = r0; r < r1; ++r) {
                if (e[r] < kReachTolerance) {
                    hit = tt[r] - a;
                    break;
                }
            }
            reach.push_back(hit);
        }
        mr.reach_times[law] = reach;
        mr.terminal_errors[law] = e.back();
    }

    mr.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
    return res;
}

}  // namespace pcid
