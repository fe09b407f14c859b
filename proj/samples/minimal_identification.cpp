// Identify theta = [-2, 1] from y = phi^T theta with phi = [1, e^{-t}], using the
// DREM filters, the exact switch detector and the smoothed adaptive law directly.

#include <cmath>
#include <cstdio>

#include "pcid/adaptive_law.hpp"
#include "pcid/detection.hpp"
#include "pcid/drem.hpp"
#include "pcid/signals.hpp"

int main() {
    using namespace pcid;
    const double dt = 1e-4;
    const SwitchingSchedule schedule({{Matrix::column({-2.0, 1.0}), 0.0}, {Matrix::column({-4.0, 2.0}), 0.5}}, 0.2);
    const RegressorFn phi = [](double t) { return Matrix::column({1.0, std::exp(-t)}); };

    DremState drem = make_drem(2, 1, 1, 5.0);
    DetectorState det = make_detector(0.1, 0.0);
    EstimatorState est = make_estimator(2, 1, 100.0, 10.0, 1e-19);

    for (int k = 0; k < 10000; ++k) {
        const double t = k * dt;
        if (det.pending_reset_at && t >= *det.pending_reset_at - 0.5 * dt) {
            drem = reset(std::move(drem), t);
            det = on_reset(std::move(det));
        }
        const RegressionSample smp = sample(schedule, phi, t);
        const DremState before = drem;
        auto [next, out] = drem_step(std::move(drem), smp, dt);
        drem = std::move(next);
        det.threshold_eta = exact_threshold(1e-9, 0.0, residual_scale(before, out, smp));
        auto [d, fired] = detect_step(std::move(det), out.residual_norm, t);
        det = std::move(d);
        if (fired) {
            std::printf("switch flagged at t = %.4f, filters reset at %.4f\n", t, *fired);
        }
        est = smooth_step(std::move(est), out.upsilon, out.delta, dt);
        est = law_step(std::move(est), dt);
        if (k % 1000 == 999) {
            std::printf("t = %.1f  theta_hat = [%+.5f, %+.5f]\n", t + dt, est.theta_hat(0, 0), est.theta_hat(1, 0));
        }
    }
    return 0;
}
