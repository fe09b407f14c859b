#include <cmath>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "pcid/errors.hpp"
#include "pcid/harness.hpp"

using namespace pcid;

namespace {

Trace phi_trace(double t_end, double dt, double (*f0)(double), double (*f1)(double)) {
    Trace tr({"t", "phi_0", "phi_1"});
    const auto steps = static_cast<long>(std::llround(t_end / dt));
    for (long k = 0; k <= steps; ++k) {
        const double t = k * dt;
        tr.add_row({t, f0(t), f1(t)});
    }
    return tr;
}

double one(double) { return 1.0; }
double zero(double) { return 0.0; }
double decay(double t) { return std::exp(-t); }

bool mentions(const std::vector<std::string>& problems, const std::string& needle) {
    for (const auto& p : problems) {
        if (p.find(needle) != std::string::npos) {
            return true;
        }
    }
    return false;
}

}  // namespace

TEST(Trace, ColumnsAndRows) {
    Trace tr({"t", "a"});
    tr.add_row({0.0, 1.0});
    tr.add_row({0.1, 2.0});
    EXPECT_EQ(tr.rows(), 2u);
    EXPECT_EQ(tr.column("a"), (std::vector<double>{1.0, 2.0}));
    EXPECT_THROW(tr.add_row({1.0}), DimensionError);
    EXPECT_THROW((void)tr.index_of("b"), DomainError);
    EXPECT_EQ(entry_names("x", 2, 1), (std::vector<std::string>{"x_0", "x_1"}));
    EXPECT_EQ(entry_names("m", 1, 2), (std::vector<std::string>{"m_0_0", "m_0_1"}));
}

TEST(Excitation, ZeroAndRankDeficientRegressors) {
    const std::vector<std::string> cols{"phi_0", "phi_1"};
    EXPECT_EQ(measure_excitation(phi_trace(1.0, 1e-3, zero, zero), cols, 0.0, 1.0), 0.0);
    EXPECT_NEAR(measure_excitation(phi_trace(1.0, 1e-3, one, zero), cols, 0.0, 1.0), 0.0, 1e-15);
}

TEST(Excitation, MatchesAnalyticGram) {
    // Gram of [1, e^{-t}] on [0, 0.5].
    const double a = 0.5;
    const double b = 1.0 - std::exp(-0.5);
    const double c = 0.5 * (1.0 - std::exp(-1.0));
    const double tr = a + c;
    const double det = a * c - b * b;
    const double oracle = det / (0.5 * (tr + std::sqrt(tr * tr - 4.0 * det)));
    const double got = measure_excitation(phi_trace(1.0, 1e-4, one, decay), {"phi_0", "phi_1"}, 0.0, 0.5);
    EXPECT_NEAR(got, oracle, 0.02 * oracle);
}

TEST(Excitation, EmptyWindowIsDomainError) {
    const Trace tr = phi_trace(1.0, 1e-3, one, decay);
    EXPECT_THROW(measure_excitation(tr, {"phi_0", "phi_1"}, 0.5, 0.5), DomainError);
    EXPECT_THROW(measure_excitation(tr, {"phi_0", "phi_1"}, 2.0, 3.0), DomainError);
}

TEST(RateFit, Examples) {
    std::vector<double> t, e, flat;
    for (int k = 0; k < 1000; ++k) {
        t.push_back(k * 1e-3);
        e.push_back(3.0 * std::exp(-5.0 * k * 1e-3));
        flat.push_back(0.7);
    }
    const RateFit r = fit_rate(t, e, 0.0, 1.0);
    ASSERT_TRUE(r.slope.has_value());
    EXPECT_NEAR(*r.slope, -5.0, 1e-6);
    EXPECT_EQ(r.points, 1000u);
    const RateFit f = fit_rate(t, flat, 0.0, 1.0);
    ASSERT_TRUE(f.slope.has_value());
    EXPECT_NEAR(*f.slope, 0.0, 1e-12);
    EXPECT_FALSE(fit_rate(t, e, 0.0, 0.009).slope.has_value());
    // Points stop at the first value at or below the floor.
    EXPECT_LT(fit_rate(t, e, 0.0, 1.0, 1.0).points, 300u);
}

TEST(Harness, ZeroHorizonGivesAnEmptyRun) {
    ScenarioConfig c = preset(ScenarioKind::simple_noise_free);
    c.horizon = 0.0;
    const RunResult r = run_experiment(c);
    EXPECT_FALSE(r.error.has_value());
    EXPECT_EQ(r.metrics.steps, 0u);
    EXPECT_TRUE(r.metrics.events.empty());
    EXPECT_LE(r.trace.rows(), 1u);
}

TEST(Harness, NoiseFreeRunDetectsBothSwitches) {
    const ScenarioConfig c = preset(ScenarioKind::simple_noise_free);
    const RunResult r = run_experiment(c);
    ASSERT_FALSE(r.error.has_value());
    ASSERT_EQ(r.metrics.events.size(), 2u);
    EXPECT_TRUE(r.metrics.false_alarm_times.empty());
    const double dt = c.dt;
    EXPECT_NEAR(r.metrics.events[0].t_hat, 0.6, dt + 1e-9);
    EXPECT_NEAR(r.metrics.events[1].t_hat, 1.1, dt + 1e-9);
    for (const SwitchReport& s : r.metrics.switches) {
        EXPECT_TRUE(s.detected);
        EXPECT_GE(s.error, c.est.delta_pr - 1e-9);
        EXPECT_LE(s.error, c.est.delta_pr + s.excitation_time + 1e-9);
    }
    EXPECT_GE(r.metrics.min_delta, 0.0);
    EXPECT_LT(r.metrics.law_form_gap_max, 1e-10);
    EXPECT_LT(r.metrics.terminal_errors.at("proposed"), 1e-3);
}

TEST(Harness, RunsAreDeterministic) {
    ScenarioConfig c = preset(ScenarioKind::simple_noise);
    c.horizon = 0.8;
    c.seed = 4;
    const RunResult a = run_experiment(c);
    const RunResult b = run_experiment(c);
    ASSERT_EQ(a.trace.rows(), b.trace.rows());
    ASSERT_EQ(a.trace.names(), b.trace.names());
    for (const auto& name : a.trace.names()) {
        const auto ca = a.trace.column(name);
        const auto cb = b.trace.column(name);
        for (std::size_t i = 0; i < ca.size(); ++i) {
            if (std::isnan(ca[i])) {
                ASSERT_TRUE(std::isnan(cb[i])) << name;
            } else {
                ASSERT_EQ(ca[i], cb[i]) << name << " row " << i;
            }
        }
    }
    c.seed = 5;
    const RunResult other = run_experiment(c);
    EXPECT_NE(a.trace.column("y_0"), other.trace.column("y_0"));
}

TEST(Harness, HalvingTheStepKeepsTheTerminalError) {
    ScenarioConfig c = preset(ScenarioKind::simple_noise_free);
    const double coarse = run_experiment(c).metrics.terminal_errors.at("proposed");
    c.dt = 0.5e-4;
    const double fine = run_experiment(c).metrics.terminal_errors.at("proposed");
    ASSERT_GT(coarse, 0.0);
    ASSERT_GT(fine, 0.0);
    EXPECT_LT(fine / coarse, 2.0);
    EXPECT_GT(fine / coarse, 0.5);
}

TEST(Harness, PlantRunIdentifiesEachModel) {
    const ScenarioConfig c = preset(ScenarioKind::switched_plant);
    const RunResult r = run_experiment(c);
    ASSERT_FALSE(r.error.has_value());
    ASSERT_EQ(r.metrics.events.size(), 2u);
    for (const IntervalReport& iv : r.metrics.intervals) {
        ASSERT_EQ(iv.terminal_block_rel_error.size(), 3u);
        EXPECT_LT(iv.terminal_block_rel_error[0], 0.02);
        EXPECT_LT(iv.terminal_block_rel_error[1], 0.02);
    }
    EXPECT_TRUE(r.trace.has("x_0"));
    EXPECT_TRUE(r.trace.has("x_1"));
}

TEST(Validation, ReportsEveryViolation) {
    ScenarioConfig c = preset(ScenarioKind::simple_noise_free);
    c.est.gamma0 = 200.0;
    c.dt = -1.0;
    c.est.delta_pr = 0.9;
    const auto problems = c.validate();
    EXPECT_TRUE(mentions(problems, "gamma0 must not exceed k"));
    EXPECT_TRUE(mentions(problems, "dt must be positive"));
    EXPECT_TRUE(mentions(problems, "shortest dwell"));
    EXPECT_THROW(run_experiment(c), ContractError);
}

TEST(Validation, PlantRejectsBaselinesAndDisturbance) {
    ScenarioConfig c = preset(ScenarioKind::switched_plant);
    c.laws.concurrent = true;
    c.disturbance.kind = DisturbanceKind::uniform_noise;
    const auto problems = c.validate();
    EXPECT_TRUE(mentions(problems, "baseline laws"));
    EXPECT_TRUE(mentions(problems, "disturbance"));
}

TEST(Validation, DisturbanceMustRespectItsBound) {
    ScenarioConfig c = preset(ScenarioKind::simple_noise);
    c.disturbance.w_max = 0.1;
    EXPECT_TRUE(mentions(c.validate(), "w_max"));
    EXPECT_TRUE(preset(ScenarioKind::simple_noise).validate().empty());
    EXPECT_TRUE(preset(ScenarioKind::simple_harmonic).validate().empty());
    EXPECT_TRUE(preset(ScenarioKind::switched_plant).validate().empty());
}
