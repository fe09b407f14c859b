#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "pcid/drem.hpp"
#include "pcid/errors.hpp"
#include "pcid/matrix.hpp"
#include "pcid/signals.hpp"

namespace pcid {

/// Fixed-capacity sliding window over scalars with O(1) mean and population
/// variance. The running sums are rebuilt from the buffer once per wrap so
/// rounding drift cannot accumulate.
class RollingWindow {
public:
    explicit RollingWindow(std::size_t capacity = 1) : buf_(capacity == 0 ? 1 : capacity) {}

    void push(double v) {
        if (count_ < buf_.size()) {
            buf_[(head_ + count_) % buf_.size()] = v;
            ++count_;
            sum_ += v;
            sq_ += v * v;
        } else {
            const double old = buf_[head_];
            buf_[head_] = v;
            head_ = (head_ + 1) % buf_.size();
            sum_ += v - old;
            sq_ += v * v - old * old;
        }
        if (++since_rebuild_ >= buf_.size()) {
            rebuild();
        }
    }

    void clear() noexcept {
        head_ = 0;
        count_ = 0;
        sum_ = 0.0;
        sq_ = 0.0;
        since_rebuild_ = 0;
    }

    [[nodiscard]] std::size_t size() const noexcept { return count_; }
    [[nodiscard]] std::size_t capacity() const noexcept { return buf_.size(); }

    [[nodiscard]] double mean() const noexcept {
        return count_ == 0 ? 0.0 : sum_ / static_cast<double>(count_);
    }

    [[nodiscard]] double variance() const noexcept {
        if (count_ == 0) {
            return 0.0;
        }
        const double m = mean();
        const double v = sq_ / static_cast<double>(count_) - m * m;
        return v > 0.0 ? v : 0.0;
    }

private:
    void rebuild() noexcept {
        sum_ = 0.0;
        sq_ = 0.0;
        for (std::size_t i = 0; i < count_; ++i) {
            const double v = buf_[(head_ + i) % buf_.size()];
            sum_ += v;
            sq_ += v * v;
        }
        since_rebuild_ = 0;
    }

    std::vector<double> buf_;
    std::size_t head_ = 0;
    std::size_t count_ = 0;
    std::size_t since_rebuild_ = 0;
    double sum_ = 0.0;
    double sq_ = 0.0;
};

struct DetectionEvent {
    std::size_t index = 0;
    double detect_time = 0.0;
    double t_hat = 0.0;
};

struct DetectorState {
    std::size_t index = 0;
    double t_up = 0.0;
    double delta_pr = 0.0;
    double threshold_eta = 0.0;
    double spread_coeff = 0.9;  // multiplies the windowed standard deviation
    std::size_t min_fill = 2;   // samples the window must hold before the robust test runs
    RollingWindow window{500};
    RollingWindow c_window{500};
    std::optional<double> pending_reset_at;
    std::vector<DetectionEvent> events;
};

/// `min_fill` of 0 means the robust test waits for a full window.
inline DetectorState make_detector(double delta_pr, double t0, std::size_t window = 500,
                                   double threshold_eta = 0.0, double spread_coeff = 0.9,
                                   std::size_t min_fill = 2) {
    if (!(delta_pr >= 0.0)) {
        throw ContractError("make_detector: delta_pr must be non-negative");
    }
    if (window < 2) {
        throw ContractError("make_detector: statistics window needs at least 2 samples");
    }
    DetectorState d;
    d.delta_pr = delta_pr;
    d.t_up = t0;
    d.threshold_eta = threshold_eta;
    d.spread_coeff = spread_coeff;
    d.min_fill = min_fill == 0 ? window : std::max<std::size_t>(2, std::min(min_fill, window));
    d.window = RollingWindow(window);
    d.c_window = RollingWindow(window);
    return d;
}

/// eta = rel * scale + abs, the zero test used by the exact detector.
inline double exact_threshold(double rel, double abs, double scale) noexcept {
    return rel * scale + abs;
}

namespace detail {

inline bool guard_open(const DetectorState& d, double t) noexcept {
    return t - d.t_up >= d.delta_pr - 1e-12 * (1.0 + std::abs(t));
}

inline std::optional<double> fire(DetectorState& d, double t) {
    const double t_hat = t + d.delta_pr;
    ++d.index;
    d.events.push_back({d.index, t, t_hat});
    d.t_up = t;
    d.pending_reset_at = t_hat;
    return t_hat;
}

}  // namespace detail

/// Exact detector: fires when the guard t - t_up >= delta_pr is open and the
/// residual norm exceeds threshold_eta. Returns the reset instant t + delta_pr.
inline std::pair<DetectorState, std::optional<double>> detect_step(DetectorState d, double residual_norm,
                                                                   double t) {
    std::optional<double> ev;
    if (detail::guard_open(d, t) && residual_norm > d.threshold_eta) {
        ev = detail::fire(d, t);
    }
    return {std::move(d), ev};
}

/// Robust detector: pushes the residual norm into the window and fires when
/// mean > spread_coeff * sqrt(var) + c_t, once the window holds min_fill samples.
inline std::pair<DetectorState, std::optional<double>> robust_detect_step(DetectorState d,
                                                                          double residual_norm,
                                                                          double c_t, double t) {
    d.window.push(residual_norm);
    std::optional<double> ev;
    if (d.window.size() >= d.min_fill && detail::guard_open(d, t)) {
        const double lhs = d.window.mean();
        const double rhs = d.spread_coeff * std::sqrt(d.window.variance()) + c_t;
        if (lhs > rhs) {
            ev = detail::fire(d, t);
        }
    }
    return {std::move(d), ev};
}

/// Instantaneous disturbance-compensation term
/// || w_max * phi phi^T adj(omega) aux * I_{m x p} ||.
inline double c_bound_instant(const DremState& drem, const Matrix& adj_omega,
                              const RegressionSample& smp, double w_max) {
    if (w_max == 0.0) {
        return 0.0;
    }
    const std::size_t m = smp.phi.cols();
    const std::size_t p = smp.y.cols();
    Matrix eye(m, p);
    for (std::size_t i = 0; i < std::min(m, p); ++i) {
        eye(i, i) = 1.0;
    }
    const Matrix v = (smp.phi * smp.phi.transpose()) * (adj_omega * (drem.aux * eye));
    return std::abs(w_max) * v.norm();
}

inline double c_bound_instant(const DremState& drem, const RegressionSample& smp, double w_max) {
    return c_bound_instant(drem, adjugate(drem.omega), smp, w_max);
}

/// Windowed mean of c_bound_instant, kept in the detector's c_window.
inline double c_bound(DetectorState& det, const DremState& drem, const Matrix& adj_omega,
                      const RegressionSample& smp, double w_max) {
    det.c_window.push(c_bound_instant(drem, adj_omega, smp, w_max));
    return det.c_window.mean();
}

/// Applied together with the filter resets: drops pre-reset statistics and
/// clears the pending reset.
inline DetectorState on_reset(DetectorState d) {
    d.window.clear();
    d.c_window.clear();
    d.pending_reset_at.reset();
    return d;
}

}  // namespace pcid
