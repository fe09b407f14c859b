#pragma once

#include <cmath>
#include <cstddef>
#include <utility>

#include "pcid/errors.hpp"
#include "pcid/matrix.hpp"

namespace pcid {

/// Smoothed regression Y = Omega * theta (+ transients) and the estimate that
/// tracks Y / Omega at rate gamma0 whenever Omega clears the gate rho.
struct EstimatorState {
    Matrix y_f;          // filtered adj(omega) z
    double omega_f = 0;  // filtered det(omega)
    Matrix theta_hat;
    double k = 100.0;
    double gamma0 = 10.0;
    double rho = 1e-19;
    std::size_t gate_underflows = 0;  // steps where Omega > rho but Omega^2 underflowed
};

inline EstimatorState make_estimator(std::size_t n, std::size_t p, double k, double gamma0, double rho,
                                     Matrix theta0 = {}) {
    if (!(k > 0.0) || !(gamma0 > 0.0) || gamma0 > k) {
        throw ContractError("make_estimator: need 0 < gamma0 <= k");
    }
    if (!(rho > 0.0)) {
        throw ContractError("make_estimator: rho must be positive");
    }
    EstimatorState e;
    e.y_f = Matrix(n, p);
    e.omega_f = 0.0;
    if (theta0.empty()) {
        e.theta_hat = Matrix(n, p);
    } else {
        if (theta0.rows() != n || theta0.cols() != p) {
            throw DimensionError("make_estimator: initial estimate has shape " + theta0.shape());
        }
        e.theta_hat = std::move(theta0);
    }
    e.k = k;
    e.gamma0 = gamma0;
    e.rho = rho;
    return e;
}

/// One Euler step of Y' = -k (Y - upsilon), Omega' = -k (Omega - delta).
inline EstimatorState smooth_step(EstimatorState e, const Matrix& upsilon, double delta, double dt) {
    if (!(dt > 0.0)) {
        throw ContractError("smooth_step: dt must be positive");
    }
    if (!upsilon.all_finite() || !std::isfinite(delta)) {
        throw DivergenceError("smooth_step: non-finite input", NAN);
    }
    Matrix dy = upsilon - e.y_f;
    e.y_f.add_scaled(dy, e.k * dt);
    e.omega_f += dt * (-e.k * (e.omega_f - delta));
    return e;
}

[[nodiscard]] inline bool gate_open(const EstimatorState& e) noexcept { return e.omega_f > e.rho; }

/// theta' = -gamma Omega (Omega theta - Y) with gamma = gamma0 / Omega^2 on the
/// open gate, theta' = 0 otherwise.
inline EstimatorState law_step(EstimatorState e, double dt) {
    if (!(dt > 0.0)) {
        throw ContractError("law_step: dt must be positive");
    }
    if (!gate_open(e)) {
        return e;
    }
    const double om2 = e.omega_f * e.omega_f;
    if (!(om2 > 0.0) || !std::isfinite(om2)) {
        ++e.gate_underflows;
        return e;
    }
    const double gamma = e.gamma0 / om2;
    Matrix mismatch = e.theta_hat * e.omega_f - e.y_f;
    e.theta_hat.add_scaled(mismatch, -dt * gamma * e.omega_f);
    return e;
}

/// Finite-time estimate Y / Omega on the open gate, the current estimate otherwise.
inline Matrix ft_estimate(const EstimatorState& e) {
    if (!gate_open(e)) {
        return e.theta_hat;
    }
    return e.y_f / e.omega_f;
}

/// The same law written as a first-order filter of the finite-time estimate:
/// theta' = -gamma0 (theta - ft_estimate).
inline EstimatorState law_step_filter_form(EstimatorState e, double dt) {
    if (!(dt > 0.0)) {
        throw ContractError("law_step_filter_form: dt must be positive");
    }
    if (!gate_open(e)) {
        return e;
    }
    Matrix diff = e.theta_hat - ft_estimate(e);
    e.theta_hat.add_scaled(diff, -dt * e.gamma0);
    return e;
}

}  // namespace pcid
