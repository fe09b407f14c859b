#pragma once

#include <cmath>
#include <limits>
#include <cstddef>
#include <utility>

#include "pcid/errors.hpp"
#include "pcid/kernels.hpp"
#include "pcid/matrix.hpp"
#include "pcid/signals.hpp"

namespace pcid {

/// Extension filters with exponentially damped input, restarted at `anchor`:
///   z' = e^{-sigma (t - anchor)} phi y,  omega' = e^{-sigma (t - anchor)} phi phi^T.
/// `aux` integrates the same weight times phi alone.
struct DremState {
    Matrix z;      // n x p
    Matrix omega;  // n x n
    Matrix aux;    // n x m
    double weight = 1.0;
    double anchor = 0.0;
    double sigma = 0.0;
};

/// Quantities derived from the filters at one instant.
struct DremOutput {
    Matrix upsilon;    // adj(omega) z
    double delta = 0;  // det(omega)
    Matrix residual;   // phi phi^T upsilon - delta phi y
    Matrix adj_omega;
    double residual_norm = 0;
};

inline DremState make_drem(std::size_t n, std::size_t m, std::size_t p, double sigma,
                           double anchor = 0.0) {
    if (!(sigma >= 0.0)) {
        throw ContractError("make_drem: sigma must be non-negative");
    }
    DremState s;
    s.z = Matrix(n, p);
    s.omega = Matrix(n, n);
    s.aux = Matrix(n, m);
    s.weight = 1.0;
    s.anchor = anchor;
    s.sigma = sigma;
    return s;
}

/// Derived quantities for the filter state `s` and the sample taken at the same instant.
inline DremOutput drem_output(const DremState& s, const RegressionSample& smp) {
    DremOutput out;
    out.adj_omega = adjugate(s.omega);
    out.delta = determinant(s.omega);
    out.upsilon = out.adj_omega * s.z;
    const Matrix phi_phit = smp.phi * smp.phi.transpose();
    out.residual = phi_phit * out.upsilon;
    out.residual.add_scaled(smp.phi * smp.y, -out.delta);
    out.residual_norm = out.residual.norm();
    return out;
}

/// Reports the outputs at `sample.t`, then advances the filters one Euler step
/// of length dt. The state therefore only ever contains samples strictly
/// before the current one, which is the left-endpoint quadrature of the
/// filter integrals and gives a zero residual right after a reset.
inline std::pair<DremState, DremOutput> drem_step(DremState s, const RegressionSample& smp, double dt) {
    if (!(dt > 0.0)) {
        throw ContractError("drem_step: dt must be positive");
    }
    if (smp.t < s.anchor - 1e-9 * (1.0 + std::abs(s.anchor))) {
        throw ContractError("drem_step: sample precedes the filter anchor");
    }
    if (smp.phi.rows() != s.omega.rows() || smp.y.cols() != s.z.cols() ||
        smp.phi.cols() != s.aux.cols() || smp.y.rows() != smp.phi.cols()) {
        throw DimensionError("drem_step: sample shape does not match the filter state");
    }
    DremOutput out = drem_output(s, smp);

    const double h = dt * s.weight;
    s.z.add_scaled(smp.phi * smp.y, h);
    s.omega.add_scaled(smp.phi * smp.phi.transpose(), h);
    s.aux.add_scaled(smp.phi, h);
    s.weight *= std::exp(-s.sigma * dt);

    if (!s.z.all_finite() || !s.omega.all_finite() || !s.aux.all_finite() ||
        !out.upsilon.all_finite() || !std::isfinite(out.delta) || !out.residual.all_finite()) {
        throw DivergenceError("drem_step: non-finite filter state", smp.t);
    }
    return {std::move(s), std::move(out)};
}

/// Zeroes the filters and moves the anchor to t_hat.
inline DremState reset(DremState s, double t_hat) {
    if (t_hat < s.anchor - 1e-9 * (1.0 + std::abs(s.anchor))) {
        throw ContractError("reset: t_hat precedes the current anchor");
    }
    s.z.set_zero();
    s.omega.set_zero();
    s.aux.set_zero();
    s.weight = 1.0;
    s.anchor = t_hat;
    return s;
}

/// Magnitude of the two terms whose difference forms the residual. Used to make
/// the zero test of the exact detector relative to the size of the signals.
inline double residual_scale(const DremState& s, const DremOutput& out, const RegressionSample& smp) {
    const double phi_n = smp.phi.norm();
    return phi_n * phi_n * out.adj_omega.norm() * s.z.norm() +
           std::abs(out.delta) * phi_n * smp.y.norm();
}

/// Rounding level of the residual. The cofactor sums behind adj(omega) and
/// det(omega) cancel down from products of size |omega|^{n-1} and |omega|^n, so
/// their absolute error stays near eps times those products even when the exact
/// values are zero (rank-deficient omega right after a reset).
inline double residual_rounding_floor(const DremState& s, const RegressionSample& smp) {
    const double eps = std::numeric_limits<double>::epsilon();
    const double n = static_cast<double>(s.omega.rows());
    const double w = s.omega.norm();
    const double phi_n = smp.phi.norm();
    return eps * (phi_n * phi_n * std::pow(w, n - 1.0) * s.z.norm() + std::pow(w, n) * phi_n * smp.y.norm());
}

}  // namespace pcid
