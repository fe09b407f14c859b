#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "pcid/errors.hpp"
#include "pcid/harness.hpp"
#include "pcid/rng.hpp"
#include "pcid/signals.hpp"

using namespace pcid;

namespace {

SwitchingSchedule simple_schedule() {
    return SwitchingSchedule({{Matrix::column({-2, 1}), 0.0}, {Matrix::column({-4, 2}), 0.5},
                              {Matrix::column({-2, 1}), 1.0}},
                             0.2);
}

Matrix simple_phi(double t) { return Matrix::column({1.0, std::exp(-t)}); }

SwitchedPlant plant_with(const Matrix& a, const Matrix& b, double l, DecayMode mode, double x1 = -1.0) {
    Matrix ab(2, 3);
    for (std::size_t i = 0; i < 2; ++i) {
        ab(i, 0) = a(i, 0);
        ab(i, 1) = a(i, 1);
        ab(i, 2) = b(i, 0);
    }
    Reference r;
    r.offset = Matrix::column({1.0});
    r.amplitude = Matrix::column({0.0});
    return make_plant(SwitchingSchedule({{ab, 0.0}}), Matrix::column({x1, 0.0}), Matrix::from_rows({{-5, -4}}),
                      Matrix::from_rows({{8}}), r, l, mode);
}

const Matrix kA1 = Matrix::from_rows({{0, 1}, {-6, -8}});
const Matrix kB1 = Matrix::column({0, 2});

}  // namespace

TEST(SplitMix64, KnownSequenceAndUnitRange) {
    // Reference values of SplitMix64 seeded with 0.
    SplitMix64 g(0);
    EXPECT_EQ(g.next(), 0xE220A8397B1DCDAFULL);
    EXPECT_EQ(g.next(), 0x6E789E6AA1B965F4ULL);
    SplitMix64 u(42);
    for (int i = 0; i < 10000; ++i) {
        const double v = u.next_unit();
        ASSERT_GE(v, 0.0);
        ASSERT_LT(v, 1.0);
    }
}

TEST(SplitMix64, SameSeedSameStream) {
    SplitMix64 a(9);
    SplitMix64 b(9);
    for (int i = 0; i < 100; ++i) {
        ASSERT_EQ(a.next(), b.next());
    }
}

TEST(Schedule, ThetaAtExamples) {
    const SwitchingSchedule s = simple_schedule();
    EXPECT_EQ(theta_at(s, 0.25), Matrix::column({-2, 1}));
    EXPECT_EQ(theta_at(s, 0.5), Matrix::column({-4, 2}));
    EXPECT_EQ(theta_at(s, std::nextafter(0.5, 0.0)), Matrix::column({-2, 1}));
    EXPECT_EQ(theta_at(s, 1.0), Matrix::column({-2, 1}));
    const SwitchingSchedule zero({{Matrix(2, 1), 0.0}});
    EXPECT_EQ(theta_at(zero, 123.0), Matrix(2, 1));
}

TEST(Schedule, BeforeStartIsDomainError) {
    EXPECT_THROW(theta_at(simple_schedule(), -1e-9), DomainError);
}

TEST(Schedule, Validation) {
    EXPECT_THROW(SwitchingSchedule(std::vector<Segment>{}), ContractError);
    EXPECT_THROW(SwitchingSchedule({{Matrix::column({1}), 0.0}, {Matrix::column({1, 2}), 1.0}}), DimensionError);
    EXPECT_THROW(SwitchingSchedule({{Matrix::column({1}), 1.0}, {Matrix::column({2}), 1.0}}), ContractError);
    EXPECT_THROW(SwitchingSchedule({{Matrix::column({1}), 0.0}, {Matrix::column({2}), 0.1}}, 0.2), ContractError);
    const SwitchingSchedule s = simple_schedule();
    EXPECT_EQ(s.switch_times(), (std::vector<double>{0.5, 1.0}));
    EXPECT_DOUBLE_EQ(s.shortest_dwell(), 0.5);
}

TEST(Schedule, PiecewiseConstantBitIdentical) {
    const SwitchingSchedule s = simple_schedule();
    const Matrix& a = theta_at(s, 0.51);
    const Matrix& b = theta_at(s, 0.99);
    EXPECT_EQ(&a, &b);
}

TEST(Sample, Examples) {
    const SwitchingSchedule s = simple_schedule();
    EXPECT_DOUBLE_EQ(sample(s, simple_phi, 0.0).y(0, 0), -1.0);
    EXPECT_DOUBLE_EQ(sample(s, simple_phi, std::log(2.0)).y(0, 0), -3.0);
    const SwitchingSchedule single({{Matrix::column({-2, 1}), 0.0}});
    EXPECT_DOUBLE_EQ(sample(single, simple_phi, std::log(2.0)).y(0, 0), -1.5);
    const SwitchingSchedule zero({{Matrix(2, 1), 0.0}});
    EXPECT_EQ(sample(zero, simple_phi, 0.3).y(0, 0), 0.0);
}

TEST(Sample, DimensionMismatch) {
    const SwitchingSchedule s = simple_schedule();
    const RegressorFn bad = [](double) { return Matrix::column({1, 2, 3}); };
    EXPECT_THROW(sample(s, bad, 0.1), DimensionError);
}

TEST(Disturbance, NoneIsZero) {
    Disturbance d(DisturbanceSpec{});
    EXPECT_EQ(d.draw(0.3, 1, 1), Matrix(1, 1));
}

TEST(Disturbance, ReproducibleAndBounded) {
    const DisturbanceSpec spec{DisturbanceKind::uniform_plus_harmonic, 0.15, 0.1, 25.0, 0.25, 77};
    Disturbance a(spec);
    Disturbance b(spec);
    double worst = 0.0;
    for (int k = 0; k < 100000; ++k) {
        const double t = k * 1e-4;
        const Matrix wa = a.draw(t, 1, 1);
        ASSERT_EQ(wa, b.draw(t, 1, 1));
        worst = std::max(worst, wa.norm());
    }
    EXPECT_LE(worst, 0.25);
    EXPECT_GT(worst, 0.2);
}

TEST(Disturbance, BoundViolationIsRejected) {
    Disturbance d(DisturbanceSpec{DisturbanceKind::uniform_noise, 1.0, 0.0, 0.0, 0.1, 1});
    bool threw = false;
    for (int k = 0; k < 100 && !threw; ++k) {
        try {
            d.draw(0.0, 1, 1);
        } catch (const ContractError&) {
            threw = true;
        }
    }
    EXPECT_TRUE(threw);
}

TEST(Sample, DisturbedOutputCarriesNoise) {
    const SwitchingSchedule s = simple_schedule();
    Disturbance d(DisturbanceSpec{DisturbanceKind::uniform_noise, 0.5, 0.0, 0.0, 0.65, 3});
    Matrix w;
    const RegressionSample smp = sample(s, simple_phi, &d, 0.2, &w);
    const RegressionSample clean = sample(s, simple_phi, 0.2);
    EXPECT_DOUBLE_EQ(smp.y(0, 0), clean.y(0, 0) + w(0, 0));
    EXPECT_LE(std::abs(w(0, 0)), 0.5);
}

TEST(Plant, EquilibriumStaysAtZero) {
    Matrix ab = Matrix::from_rows({{0, 1, 0}, {-6, -8, 2}});
    Reference r;
    r.offset = Matrix::column({0.0});
    r.amplitude = Matrix::column({0.0});
    SwitchedPlant p = make_plant(SwitchingSchedule({{ab, 0.0}}), Matrix(2, 1), Matrix::from_rows({{-5, -4}}),
                                 Matrix::from_rows({{8}}), r, 1.0);
    for (int k = 0; k < 1000; ++k) {
        p = plant_step(std::move(p), k * 1e-3, 1e-3);
    }
    EXPECT_EQ(p.x, Matrix(2, 1));
}

TEST(Plant, OneHandComputedEulerStep) {
    SwitchedPlant p = plant_with(kA1, kB1, 1.0, DecayMode::euler);
    EXPECT_EQ(plant_input(p, 0.0), Matrix::column({13.0}));
    p = plant_step(std::move(p), 0.0, 1e-4);
    EXPECT_DOUBLE_EQ(p.x(0, 0), -1.0);
    EXPECT_NEAR(p.x(1, 0), 0.0032, 1e-15);
}

TEST(Plant, AutonomousStableNormNonIncreasing) {
    // Symmetric negative definite A gives a monotone Euclidean norm.
    Matrix ab = Matrix::from_rows({{-1, 0.5, 0}, {0.5, -2, 0}});
    Reference r;
    r.offset = Matrix::column({0.0});
    r.amplitude = Matrix::column({0.0});
    SwitchedPlant p = make_plant(SwitchingSchedule({{ab, 0.0}}), Matrix::column({1.0, -2.0}),
                                 Matrix::from_rows({{0, 0}}), Matrix::from_rows({{0}}), r, 1.0);
    double prev = p.x.norm();
    for (int k = 0; k < 20000; ++k) {
        p = plant_step(std::move(p), k * 1e-3, 1e-3);
        ASSERT_LE(p.x.norm(), prev + 1e-15);
        prev = p.x.norm();
    }
}

TEST(Plant, ControllabilityOfBuiltInModels) {
    EXPECT_TRUE(controllable(kA1, kB1));
    EXPECT_TRUE(controllable(Matrix::from_rows({{0, 1}, {-2, -4}}), Matrix::column({0, 4})));
    EXPECT_FALSE(controllable(Matrix::from_rows({{-1, 0}, {0, -2}}), Matrix::column({1, 0})));
}

TEST(Plant, ParameterizationAtReset) {
    SwitchedPlant p = plant_with(kA1, kB1, 1.0, DecayMode::euler);
    const RegressionSample s0 = parameterize_plant(p, 0.0);
    EXPECT_EQ(s0.phi, Matrix::column({0, 0, 0, 1}));
    EXPECT_EQ(s0.y, p.x.transpose());
    for (int k = 0; k < 100; ++k) {
        p = plant_step(std::move(p), k * 1e-3, 1e-3);
    }
    p = reset_plant_filter(std::move(p), 0.1);
    const RegressionSample s1 = parameterize_plant(p, 0.1);
    EXPECT_EQ(s1.phi, Matrix::column({0, 0, 0, 1}));
    EXPECT_EQ(s1.y, p.x.transpose());
}

TEST(Plant, ResetIsIdempotentAndChecksAnchor) {
    SwitchedPlant p = plant_with(kA1, kB1, 1.0, DecayMode::euler);
    for (int k = 0; k < 10; ++k) {
        p = plant_step(std::move(p), k * 1e-3, 1e-3);
    }
    const SwitchedPlant once = reset_plant_filter(p, 0.01);
    const SwitchedPlant twice = reset_plant_filter(once, 0.01);
    EXPECT_EQ(once.phi_bar, twice.phi_bar);
    EXPECT_EQ(once.x_anchor, twice.x_anchor);
    EXPECT_EQ(once.anchor, twice.anchor);
    EXPECT_THROW(reset_plant_filter(p, 0.5), ContractError);
    EXPECT_THROW(reset_plant_filter(once, 0.005), ContractError);
}

namespace {

/// max_t |y - phi^T Theta| over one segment of length `horizon`.
double regression_defect(double dt, DecayMode mode, double horizon = 1.0) {
    SwitchedPlant p = plant_with(kA1, kB1, 1.0, mode);
    double worst = 0.0;
    const auto steps = static_cast<long>(std::llround(horizon / dt));
    for (long k = 0; k < steps; ++k) {
        const double t = k * dt;
        const RegressionSample s = parameterize_plant(p, t);
        const Matrix defect = s.y - s.phi.transpose() * p.regression_theta(t);
        worst = std::max(worst, defect.max_abs());
        p = plant_step(std::move(p), t, dt);
    }
    return worst;
}

}  // namespace

TEST(Plant, RegressionIdentityHoldsOnASegment) {
    // With the exponential entry propagated by the same Euler recursion as the
    // filter, the identity is exact up to rounding.
    EXPECT_LT(regression_defect(1e-4, DecayMode::euler), 1e-12);
}

TEST(Plant, ExactExponentialShowsFirstOrderDefect) {
    const double coarse = regression_defect(1e-3, DecayMode::exact);
    const double fine = regression_defect(1e-4, DecayMode::exact);
    EXPECT_GT(coarse, 0.0);
    const double ratio = coarse / fine;
    EXPECT_GT(ratio, 7.0);
    EXPECT_LT(ratio, 13.0);
    EXPECT_LT(coarse, 10.0 * 1e-3);
}

TEST(Plant, ExponentialEntryDecaysMonotonically) {
    SwitchedPlant p = plant_with(kA1, kB1, 50.0, DecayMode::euler);
    double prev = parameterize_plant(p, 0.0).phi(3, 0);
    for (int k = 0; k < 2000; ++k) {
        p = plant_step(std::move(p), k * 1e-4, 1e-4);
        const double e = parameterize_plant(p, (k + 1) * 1e-4).phi(3, 0);
        ASSERT_LE(e, prev);
        ASSERT_GE(e, 0.0);
        prev = e;
    }
    EXPECT_LT(prev, 1e-3);
}

TEST(Plant, MakePlantChecksShapes) {
    Reference r;
    r.offset = Matrix::column({1.0});
    r.amplitude = Matrix::column({0.0});
    Matrix ab = Matrix::from_rows({{0, 1, 0}, {-6, -8, 2}});
    EXPECT_THROW(make_plant(SwitchingSchedule({{ab, 0.0}}), Matrix::column({1, 2, 3}), Matrix::from_rows({{-5, -4}}),
                            Matrix::from_rows({{8}}), r, 1.0),
                 DimensionError);
    EXPECT_THROW(make_plant(SwitchingSchedule({{ab, 0.0}}), Matrix::column({1, 2}), Matrix::from_rows({{-5, -4}}),
                            Matrix::from_rows({{8}}), r, 0.0),
                 ContractError);
}

TEST(Plant, BuiltInPresetMatchesPublishedGains) {
    const ScenarioConfig c = preset(ScenarioKind::switched_plant);
    ASSERT_TRUE(c.plant.has_value());
    EXPECT_EQ(c.plant->kx, Matrix::from_rows({{-5, -4}}));
    EXPECT_EQ(c.plant->kr, Matrix::from_rows({{8}}));
    EXPECT_EQ(c.plant->r.at(3.0), Matrix::column({1.0}));
    EXPECT_EQ(c.est.sigma, 5.0);
    EXPECT_EQ(c.est.k, 100.0);
    EXPECT_EQ(c.est.delta_pr, 0.1);
    EXPECT_EQ(c.est.rho, 1e-17);
    EXPECT_EQ(c.est.gamma0, 10.0);
    for (std::size_t j = 0; j < c.plant->a.size(); ++j) {
        EXPECT_TRUE(controllable(c.plant->a[j], c.plant->b[j]));
    }
}
