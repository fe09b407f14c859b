#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pcid/errors.hpp"
#include "pcid/harness.hpp"

namespace pcid {

/// Failure to create or write an output artifact.
class IoError : public Error {
public:
    using Error::Error;
};

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc()) {
        throw IoError("format_double: conversion failed");
    }
    return std::string(buf, end);
}

/// Rows 0, N, 2N, ... of the trace, restricted to `columns` (all when empty).
inline void write_trace_csv(std::ostream& out, const Trace& trace, std::size_t decimate,
                            const std::vector<std::string>& columns = {}) {
    if (decimate == 0) {
        throw ContractError("write_trace_csv: decimate must be positive");
    }
    std::vector<std::size_t> idx;
    const std::vector<std::string>& names = columns.empty() ? trace.names() : columns;
    for (const auto& n : names) {
        idx.push_back(trace.index_of(n));
    }
    for (std::size_t i = 0; i < names.size(); ++i) {
        out << (i ? "," : "") << names[i];
    }
    out << '\n';
    for (std::size_t r = 0; r < trace.rows(); r += decimate) {
        for (std::size_t i = 0; i < idx.size(); ++i) {
            out << (i ? "," : "") << format_double(trace.at(r, idx[i]));
        }
        out << '\n';
    }
}

namespace detail {

inline double or_nan(const std::optional<double>& v) { return v ? *v : NAN; }

inline std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw IoError("cannot open '" + p.string() + "' for writing");
    }
    return f;
}

inline void finish_out(std::ofstream& f, const std::filesystem::path& p) {
    f.flush();
    if (!f) {
        throw IoError("write to '" + p.string() + "' failed");
    }
}

}  // namespace detail

inline nlohmann::json metrics_to_json(const MetricsReport& m) {
    using nlohmann::json;
    json j;
    j["scenario"] = m.scenario;
    j["seed"] = m.seed;
    j["steps"] = m.steps;
    j["runtime_s"] = m.runtime_s;
    j["initial_excitation_time"] = m.initial_excitation_time;
    j["min_delta"] = m.min_delta;
    j["min_omega_after_t0"] = m.min_omega_after_t0;
    j["law_form_gap_max"] = m.law_form_gap_max;
    j["gate_underflows"] = m.gate_underflows;
    j["event_count"] = m.events.size();
    j["false_alarm_times"] = m.false_alarm_times;
    j["purges"] = m.purges;
    j["purge_times"] = m.purge_times;
    json sw = json::array();
    for (const SwitchReport& s : m.switches) {
        sw.push_back({{"switch_time", s.switch_time},
                      {"detected", s.detected},
                      {"detect_time", s.detect_time},
                      {"t_hat", s.t_hat},
                      {"error", s.error},
                      {"excitation", s.excitation},
                      {"excitation_time", s.excitation_time},
                      {"residual_peak", s.residual_peak},
                      {"residual_peak_scaled", s.residual_peak_scaled}});
    }
    j["switches"] = sw;
    json iv = json::array();
    for (const IntervalReport& i : m.intervals) {
        iv.push_back({{"start", i.start},
                      {"end", i.end},
                      {"detected", i.detected},
                      {"rate", detail::or_nan(i.rate)},
                      {"rate_points", i.rate_points},
                      {"terminal_error", i.terminal_error},
                      {"terminal_rel_error", i.terminal_rel_error},
                      {"terminal_block_rel_error", i.terminal_block_rel_error},
                      {"zero_branch_residual", i.zero_branch_residual},
                      {"zero_branch_scaled", i.zero_branch_scaled},
                      {"ub_ratio_max", i.ub_ratio_max},
                      {"ub_median", i.ub_median}});
    }
    j["intervals"] = iv;
    j["reach_times"] = m.reach_times;
    j["terminal_errors"] = m.terminal_errors;
    return j;
}

/// index, detect_time, t_hat, true_switch_time, error; the last two are nan
/// for events not paired with a switch.
inline void write_events_csv(std::ostream& out, const MetricsReport& m) {
    out << "index,detect_time,t_hat,true_switch_time,error\n";
    for (const DetectionEvent& e : m.events) {
        double sw = NAN;
        double err = NAN;
        for (const SwitchReport& s : m.switches) {
            if (s.detected && s.detect_time == e.detect_time) {
                sw = s.switch_time;
                err = s.error;
            }
        }
        out << e.index << ',' << format_double(e.detect_time) << ',' << format_double(e.t_hat) << ','
            << format_double(sw) << ',' << format_double(err) << '\n';
    }
}

/// Column sets for the plot files. fig2 and fig3 are written for every run,
/// fig6 and fig7 for the robust detector, fig11 for the plant.
inline std::vector<std::pair<std::string, std::vector<std::string>>> plot_sets(const RunResult& r,
                                                                                bool robust) {
    const Trace& tr = r.trace;
    auto prefixed = [&tr](const std::string& prefix) {
        std::vector<std::string> out;
        for (const auto& name : tr.names()) {
            if (name.rfind(prefix, 0) == 0) {
                out.push_back(name);
            }
        }
        return out;
    };
    auto concat = [](std::vector<std::string> a, const std::vector<std::string>& b) {
        a.insert(a.end(), b.begin(), b.end());
        return a;
    };

    std::vector<std::pair<std::string, std::vector<std::string>>> sets;
    sets.push_back({"fig2", {"t", "omega_f", "residual_norm"}});
    const std::vector<std::string> fig3 =
        concat(concat({"t", "last_switch", "last_t_hat"}, r.theta_columns), r.theta_hat_columns);
    sets.push_back({"fig3", fig3});
    if (robust) {
        std::vector<std::string> y = prefixed("y_");
        std::erase_if(y, [](const std::string& n) { return n.rfind("y_clean_", 0) == 0; });
        sets.push_back({"fig6", concat(concat(concat({"t"}, prefixed("y_clean_")), y), {"stat_lhs", "stat_rhs"})});
        sets.push_back({"fig7", concat(fig3, {"theta_err", "ub"})});
    }
    if (tr.has("x_0")) {
        sets.push_back({"fig11", concat(fig3, prefixed("x_"))});
    }
    return sets;
}

/// Writes trace.csv, metrics.json, events.csv and plotdata/*.csv into `dir`.
inline void write_artifacts(const std::filesystem::path& dir, const RunResult& r, std::size_t decimate,
                            const nlohmann::json& resolved_config) {
    std::error_code ec;
    std::filesystem::create_directories(dir / "plotdata", ec);
    if (ec) {
        throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
    }
    {
        const auto p = dir / "trace.csv";
        auto f = detail::open_out(p);
        write_trace_csv(f, r.trace, decimate);
        detail::finish_out(f, p);
    }
    {
        const auto p = dir / "events.csv";
        auto f = detail::open_out(p);
        write_events_csv(f, r.metrics);
        detail::finish_out(f, p);
    }
    {
        const auto p = dir / "metrics.json";
        auto f = detail::open_out(p);
        nlohmann::json j = metrics_to_json(r.metrics);
        j["decimate"] = decimate;
        j["config"] = resolved_config;
        if (r.error) {
            j["error"] = {{"message", r.error->message}, {"time", r.error->time}};
        }
        f << j.dump(2) << '\n';
        detail::finish_out(f, p);
    }
    const bool robust = resolved_config.value("detector", "") == "robust";
    for (const auto& [name, cols] : plot_sets(r, robust)) {
        const auto p = dir / "plotdata" / (name + ".csv");
        auto f = detail::open_out(p);
        write_trace_csv(f, r.trace, decimate, cols);
        detail::finish_out(f, p);
    }
}

}  // namespace pcid
