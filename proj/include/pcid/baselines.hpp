#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "pcid/errors.hpp"
#include "pcid/kernels.hpp"
#include "pcid/matrix.hpp"
#include "pcid/signals.hpp"

namespace pcid {

/// One estimate per candidate model; only the model selected by the switching
/// signal kappa is active.
struct ModelBank {
    std::vector<Matrix> estimates;  // each n x p
    Matrix gamma;                   // n x n adaptation gain

    [[nodiscard]] std::size_t size() const noexcept { return estimates.size(); }
};

inline ModelBank make_bank(std::size_t models, std::size_t n, std::size_t p, Matrix gamma) {
    if (models == 0) {
        throw ContractError("make_bank: need at least one model");
    }
    if (gamma.rows() != n || gamma.cols() != n) {
        throw DimensionError("make_bank: gain must be " + std::to_string(n) + "x" + std::to_string(n));
    }
    ModelBank b;
    b.estimates.assign(models, Matrix(n, p));
    b.gamma = std::move(gamma);
    return b;
}

namespace detail {

inline void require_model(const ModelBank& b, std::size_t kappa) {
    if (kappa >= b.size()) {
        throw ContractError("model index " + std::to_string(kappa) + " out of range");
    }
}

// phi (phi^T theta - y)
inline Matrix prediction_gradient(const Matrix& phi, const Matrix& y, const Matrix& theta) {
    return phi * (phi.transpose() * theta - y);
}

}  // namespace detail

/// theta_j' = -Gamma phi (phi^T theta_j - y) for the active model, 0 for the rest.
inline ModelBank gradient_step(ModelBank b, const RegressionSample& smp, std::size_t kappa, double dt) {
    detail::require_model(b, kappa);
    Matrix& th = b.estimates[kappa];
    th.add_scaled(b.gamma * detail::prediction_gradient(smp.phi, smp.y, th), -dt);
    if (!th.all_finite()) {
        throw DivergenceError("gradient_step: estimate diverged", smp.t);
    }
    return b;
}

struct StackEntry {
    Matrix phi;  // n x m
    Matrix y;    // m x p
    double t = 0.0;
};

/// Memory of recorded regression samples with R = sum phi_k phi_k^T. Pushing
/// onto a full stack drops the oldest entry.
class DataStack {
public:
    DataStack() = default;
    DataStack(std::size_t capacity, std::size_t n) : capacity_(capacity), r_(n, n) {
        if (capacity == 0) {
            throw ContractError("DataStack: capacity must be positive");
        }
    }

    void push(StackEntry e) {
        if (entries_.size() == capacity_) {
            entries_.erase(entries_.begin());
        }
        entries_.push_back(std::move(e));
        recompute();
    }

    void clear() {
        entries_.clear();
        recompute();
    }

    [[nodiscard]] const std::vector<StackEntry>& entries() const noexcept { return entries_; }
    [[nodiscard]] const Matrix& r() const noexcept { return r_; }
    [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }
    [[nodiscard]] std::size_t capacity() const noexcept { return capacity_; }
    [[nodiscard]] bool empty() const noexcept { return entries_.empty(); }
    [[nodiscard]] bool full() const noexcept { return entries_.size() == capacity_; }

    /// sum_k phi_k (phi_k^T theta - y_k); zero for an empty stack.
    [[nodiscard]] Matrix term(const Matrix& theta) const {
        Matrix acc(theta.rows(), theta.cols());
        for (const StackEntry& e : entries_) {
            acc += detail::prediction_gradient(e.phi, e.y, theta);
        }
        return acc;
    }

    [[nodiscard]] double min_eigenvalue_r() const { return min_eigenvalue(r_); }

private:
    void recompute() {
        r_.set_zero();
        for (const StackEntry& e : entries_) {
            r_ += e.phi * e.phi.transpose();
        }
    }

    std::size_t capacity_ = 1;
    std::vector<StackEntry> entries_;
    Matrix r_;
};

/// Concurrent learning over a model bank: the active model follows the
/// gradient term plus gamma2 times its stack term, inactive models follow
/// their stack term only. `bank.gamma` plays the role of gamma1.
inline ModelBank concurrent_step(ModelBank b, const std::vector<DataStack>& stacks, const Matrix& gamma2,
                                 const RegressionSample& smp, std::size_t kappa, double dt) {
    detail::require_model(b, kappa);
    if (stacks.size() != b.size()) {
        throw DimensionError("concurrent_step: one stack per model required");
    }
    for (std::size_t j = 0; j < b.size(); ++j) {
        Matrix& th = b.estimates[j];
        Matrix rate = gamma2 * stacks[j].term(th);
        if (j == kappa) {
            rate += b.gamma * detail::prediction_gradient(smp.phi, smp.y, th);
        }
        th.add_scaled(rate, -dt);
        if (!th.all_finite()) {
            throw DivergenceError("concurrent_step: estimate diverged", smp.t);
        }
    }
    return b;
}

struct PurgingState {
    Matrix theta_hat;
    DataStack use_stack;
    DataStack cand_stack;
    Matrix gamma;  // n x n
    double c1 = 1.0;
    double c2 = 1.0;
    double c3 = 1e-6;
    double t_bar = 0.0;      // time of the previous purge
    double last_record = -INFINITY;
    double record_spacing = 0.0;
    std::size_t purges = 0;
};

inline PurgingState make_purging(std::size_t n, std::size_t p, std::size_t stack_len, Matrix gamma, double c1,
                                 double c2, double c3, double record_spacing, double t0) {
    if (gamma.rows() != n || gamma.cols() != n) {
        throw DimensionError("make_purging: gain must be n x n");
    }
    PurgingState s;
    s.theta_hat = Matrix(n, p);
    s.use_stack = DataStack(stack_len, n);
    s.cand_stack = DataStack(stack_len, n);
    s.gamma = std::move(gamma);
    s.c1 = c1;
    s.c2 = c2;
    s.c3 = c3;
    s.t_bar = t0;
    s.record_spacing = record_spacing;
    return s;
}

/// Records the sample into the candidate stack when at least record_spacing
/// has elapsed since the previous record.
inline PurgingState purging_record(PurgingState s, const RegressionSample& smp) {
    if (smp.t - s.last_record >= s.record_spacing - 1e-12 * (1.0 + std::abs(smp.t))) {
        s.cand_stack.push({smp.phi, smp.y, smp.t});
        s.last_record = smp.t;
    }
    return s;
}

/// Concurrent law with the in-use stack, followed by the purge test
/// lambda_min(R_new) > c1 lambda_min(R_use) e^{-c2 (t - t_bar)} + c3, which
/// replaces the in-use stack with the (full) candidate stack.
inline PurgingState purging_step(PurgingState s, const RegressionSample& smp, double dt) {
    Matrix rate = detail::prediction_gradient(smp.phi, smp.y, s.theta_hat) + s.use_stack.term(s.theta_hat);
    s.theta_hat.add_scaled(s.gamma * rate, -dt);
    if (!s.theta_hat.all_finite()) {
        throw DivergenceError("purging_step: estimate diverged", smp.t);
    }
    if (s.cand_stack.full()) {
        const double lam_new = s.cand_stack.min_eigenvalue_r();
        const double lam_use = s.use_stack.empty() ? 0.0 : s.use_stack.min_eigenvalue_r();
        if (lam_new > s.c1 * lam_use * std::exp(-s.c2 * (smp.t - s.t_bar)) + s.c3) {
            s.use_stack = s.cand_stack;
            s.t_bar = smp.t;
            ++s.purges;
        }
    }
    return s;
}

struct EfficientDremState {
    Matrix z;      // n x p
    Matrix omega;  // n x n
    Matrix theta_hat;
    double l0 = 100.0;
    double lambda_lb = 1e-6;
    double lambda_ub = 1e-3;
    double gamma0 = 1e11;
    double last_l = 0.0;
};

inline EfficientDremState make_efficient_drem(std::size_t n, std::size_t p, double l0, double lambda_lb,
                                              double lambda_ub, double gamma0) {
    if (!(lambda_lb < lambda_ub)) {
        throw ContractError("make_efficient_drem: need lambda_lb < lambda_ub");
    }
    if (!(l0 > 0.0) || !(gamma0 > 0.0)) {
        throw ContractError("make_efficient_drem: l0 and gamma0 must be positive");
    }
    EfficientDremState s;
    s.z = Matrix(n, p);
    s.omega = Matrix(n, n);
    s.theta_hat = Matrix(n, p);
    s.l0 = l0;
    s.lambda_lb = lambda_lb;
    s.lambda_ub = lambda_ub;
    s.gamma0 = gamma0;
    return s;
}

/// Damping l = l0 when the normalized eigenvalue factor reaches 1, else
/// l0 / 2 * (factor + 1), with the factor clamped below at -1 so l >= 0.
inline double efficient_damping(double lambda_min, double l0, double lb, double ub) {
    double f = (2.0 * lambda_min - ub - lb) / (ub - lb);
    if (f >= 1.0) {
        return l0;
    }
    if (f < -1.0) {
        f = -1.0;
    }
    return 0.5 * l0 * (f + 1.0);
}

/// One Euler step of the eigenvalue-damped extension and the DREM law
/// theta' = -gamma0 det(omega) (det(omega) theta - adj(omega) z).
/// `reset_now` zeroes the filters first; callers pass true only at known
/// switch instants.
inline EfficientDremState efficient_drem_step(EfficientDremState s, const RegressionSample& smp, bool reset_now,
                                              double dt) {
    if (reset_now) {
        s.z.set_zero();
        s.omega.set_zero();
    }
    const double l = efficient_damping(min_eigenvalue(s.omega), s.l0, s.lambda_lb, s.lambda_ub);
    s.last_l = l;
    const double det = determinant(s.omega);
    Matrix mismatch = s.theta_hat * det - adjugate(s.omega) * s.z;
    s.theta_hat.add_scaled(mismatch, -dt * s.gamma0 * det);

    Matrix dz = smp.phi * smp.y;
    dz.add_scaled(s.z, -l);
    Matrix dw = smp.phi * smp.phi.transpose();
    dw.add_scaled(s.omega, -l);
    s.z.add_scaled(dz, dt);
    s.omega.add_scaled(dw, dt);
    if (!s.theta_hat.all_finite() || !s.z.all_finite() || !s.omega.all_finite()) {
        throw DivergenceError("efficient_drem_step: state diverged", smp.t);
    }
    return s;
}

}  // namespace pcid
