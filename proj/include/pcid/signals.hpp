#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "pcid/errors.hpp"
#include "pcid/kernels.hpp"
#include "pcid/matrix.hpp"
#include "pcid/rng.hpp"

namespace pcid {

/// One constant-parameter stretch of a schedule, active from `start` on.
struct Segment {
    Matrix theta;
    double start = 0.0;
};

/// Piecewise-constant parameter trajectory. Lookup is right-continuous: at a
/// switch instant the new segment is already active.
class SwitchingSchedule {
public:
    SwitchingSchedule() = default;

    /// `min_gap` is the dwell-time bound every pair of consecutive starts must respect.
    explicit SwitchingSchedule(std::vector<Segment> segments, double min_gap = 0.0)
        : segments_(std::move(segments)), min_gap_(min_gap) {
        if (segments_.empty()) {
            throw ContractError("SwitchingSchedule: no segments");
        }
        const std::size_t r = segments_.front().theta.rows();
        const std::size_t c = segments_.front().theta.cols();
        for (std::size_t i = 0; i < segments_.size(); ++i) {
            const Segment& s = segments_[i];
            if (s.theta.rows() != r || s.theta.cols() != c) {
                throw DimensionError("SwitchingSchedule: segment " + std::to_string(i) +
                                     " has shape " + s.theta.shape() + ", expected " +
                                     segments_.front().theta.shape());
            }
            if (!std::isfinite(s.start) || !s.theta.all_finite()) {
                throw ContractError("SwitchingSchedule: non-finite segment " + std::to_string(i));
            }
            if (i > 0) {
                const double gap = s.start - segments_[i - 1].start;
                if (!(gap > 0.0)) {
                    throw ContractError("SwitchingSchedule: start times must strictly increase");
                }
                if (gap < min_gap_) {
                    throw ContractError("SwitchingSchedule: dwell time " + std::to_string(gap) +
                                        " below minimum " + std::to_string(min_gap_));
                }
            }
        }
    }

    [[nodiscard]] const std::vector<Segment>& segments() const noexcept { return segments_; }
    [[nodiscard]] double start_time() const { return segments_.front().start; }
    [[nodiscard]] double min_gap() const noexcept { return min_gap_; }
    [[nodiscard]] std::size_t rows() const { return segments_.front().theta.rows(); }
    [[nodiscard]] std::size_t cols() const { return segments_.front().theta.cols(); }

    /// Switch instants after the initial one.
    [[nodiscard]] std::vector<double> switch_times() const {
        std::vector<double> out;
        for (std::size_t i = 1; i < segments_.size(); ++i) {
            out.push_back(segments_[i].start);
        }
        return out;
    }

    /// Smallest gap between consecutive starts; infinity for a single segment.
    [[nodiscard]] double shortest_dwell() const {
        double g = INFINITY;
        for (std::size_t i = 1; i < segments_.size(); ++i) {
            g = std::min(g, segments_[i].start - segments_[i - 1].start);
        }
        return g;
    }

    [[nodiscard]] std::size_t index_at(double t) const {
        if (t < segments_.front().start) {
            throw DomainError("SwitchingSchedule: t = " + std::to_string(t) +
                              " precedes the first segment");
        }
        std::size_t lo = 0;
        std::size_t hi = segments_.size();
        while (hi - lo > 1) {
            const std::size_t mid = (lo + hi) / 2;
            if (segments_[mid].start <= t) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        return lo;
    }

    [[nodiscard]] const Matrix& theta_at(double t) const { return segments_[index_at(t)].theta; }

private:
    std::vector<Segment> segments_;
    double min_gap_ = 0.0;
};

inline const Matrix& theta_at(const SwitchingSchedule& schedule, double t) {
    return schedule.theta_at(t);
}

/// One observation of y = phi^T theta + w.
struct RegressionSample {
    double t = 0.0;
    Matrix phi;  // n x m
    Matrix y;    // m x p
};

enum class DisturbanceKind { none, uniform_noise, uniform_plus_harmonic };

struct DisturbanceSpec {
    DisturbanceKind kind = DisturbanceKind::none;
    double noise_amplitude = 0.0;     // uniform on [-a, a]
    double harmonic_amplitude = 0.0;
    double harmonic_frequency = 0.0;  // rad/s
    double w_max = 0.0;               // declared bound on ||w||
    std::uint64_t rng_seed = 0;
};

/// Stateful disturbance source built from a DisturbanceSpec. Every draw is
/// checked against the declared bound.
class Disturbance {
public:
    Disturbance() = default;
    explicit Disturbance(const DisturbanceSpec& spec) : spec_(spec), rng_(spec.rng_seed) {}

    [[nodiscard]] const DisturbanceSpec& spec() const noexcept { return spec_; }

    /// w(t) with the given shape. Noise is drawn independently per entry.
    Matrix draw(double t, std::size_t rows, std::size_t cols) {
        Matrix w(rows, cols);
        if (spec_.kind == DisturbanceKind::none) {
            return w;
        }
        const double harmonic = spec_.kind == DisturbanceKind::uniform_plus_harmonic
                                    ? spec_.harmonic_amplitude * std::sin(spec_.harmonic_frequency * t)
                                    : 0.0;
        for (double& v : w.entries()) {
            v = rng_.uniform(-spec_.noise_amplitude, spec_.noise_amplitude) + harmonic;
        }
        if (w.norm() > spec_.w_max) {
            throw ContractError("Disturbance: |w| = " + std::to_string(w.norm()) +
                                " exceeds declared bound w_max = " + std::to_string(spec_.w_max));
        }
        return w;
    }

private:
    DisturbanceSpec spec_;
    SplitMix64 rng_{0};
};

using RegressorFn = std::function<Matrix(double)>;

/// Builds a sample of y = phi(t)^T theta(t) + w(t). `w` may be null for a
/// disturbance-free draw; when `w_out` is given it receives the disturbance.
inline RegressionSample sample(const SwitchingSchedule& schedule, const RegressorFn& regressor,
                               Disturbance* w, double t, Matrix* w_out = nullptr) {
    const Matrix& theta = schedule.theta_at(t);
    Matrix phi = regressor(t);
    if (phi.rows() != theta.rows()) {
        throw DimensionError("sample: regressor is " + phi.shape() + " but parameters are " +
                             theta.shape());
    }
    if (!phi.all_finite()) {
        throw DivergenceError("sample: non-finite regressor", t);
    }
    Matrix y = phi.transpose() * theta;
    if (w != nullptr) {
        Matrix noise = w->draw(t, y.rows(), y.cols());
        y += noise;
        if (w_out != nullptr) {
            *w_out = std::move(noise);
        }
    } else if (w_out != nullptr) {
        *w_out = Matrix(y.rows(), y.cols());
    }
    return {t, std::move(phi), std::move(y)};
}

inline RegressionSample sample(const SwitchingSchedule& schedule, const RegressorFn& regressor,
                               double t) {
    return sample(schedule, regressor, nullptr, t);
}

/// r(t): either a constant vector or offset + amplitude * sin(frequency * t).
struct Reference {
    enum class Kind { constant, sinusoid };
    Kind kind = Kind::constant;
    Matrix offset;     // m_u x 1, the constant value for Kind::constant
    Matrix amplitude;  // m_u x 1, unused for Kind::constant
    double frequency = 0.0;

    [[nodiscard]] Matrix at(double t) const {
        if (kind == Kind::constant) {
            return offset;
        }
        return offset + amplitude * std::sin(frequency * t);
    }
};

/// Whether the exponential entry of the plant regressor follows the Euler
/// recursion e <- (1 - l dt) e or the exact exponential.
enum class DecayMode { euler, exact };

/// Switched linear plant x' = A x + B u under u = Kx x + Kr r, with the
/// first-order filter that turns it into a linear regression.
struct SwitchedPlant {
    SwitchingSchedule schedule_ab;  // segments hold [A | B]
    Matrix x;                       // n_x x 1
    Matrix kx;                      // m_u x n_x
    Matrix kr;                      // m_u x m_u
    Reference r;
    double l = 1.0;
    Matrix phi_bar;  // (n_x + m_u) x 1
    double anchor = 0.0;
    Matrix x_anchor;  // x at the last filter reset
    double decay = 1.0;
    double time = 0.0;
    DecayMode decay_mode = DecayMode::euler;

    [[nodiscard]] std::size_t nx() const noexcept { return x.rows(); }
    [[nodiscard]] std::size_t mu() const noexcept { return kx.rows(); }

    [[nodiscard]] Matrix a_at(double t) const { return block(t, 0, nx()); }
    [[nodiscard]] Matrix b_at(double t) const { return block(t, nx(), mu()); }

    /// Parameter of the filtered regression at time t: rows [A^T; B^T; x(anchor)^T].
    [[nodiscard]] Matrix regression_theta(double t) const {
        Matrix ab_t = schedule_ab.theta_at(t).transpose();
        Matrix xa_t = x_anchor.transpose();
        return vstack({&ab_t, &xa_t});
    }

private:
    [[nodiscard]] Matrix block(double t, std::size_t c0, std::size_t count) const {
        const Matrix& ab = schedule_ab.theta_at(t);
        Matrix out(ab.rows(), count);
        for (std::size_t i = 0; i < ab.rows(); ++i) {
            for (std::size_t j = 0; j < count; ++j) {
                out(i, j) = ab(i, c0 + j);
            }
        }
        return out;
    }
};

/// Checks shapes and builds a plant with its filter reset at `t0`.
inline SwitchedPlant make_plant(SwitchingSchedule schedule_ab, Matrix x0, Matrix kx, Matrix kr,
                                Reference r, double l, DecayMode mode = DecayMode::euler) {
    const std::size_t nx = x0.rows();
    const std::size_t mu = kx.rows();
    if (x0.cols() != 1 || schedule_ab.rows() != nx || schedule_ab.cols() != nx + mu ||
        kx.cols() != nx || kr.rows() != mu || kr.cols() != mu || r.offset.rows() != mu ||
        r.offset.cols() != 1) {
        throw DimensionError("make_plant: inconsistent plant dimensions");
    }
    if (r.kind == Reference::Kind::sinusoid && r.amplitude.rows() != mu) {
        throw DimensionError("make_plant: reference amplitude must have m_u rows");
    }
    if (!(l > 0.0)) {
        throw ContractError("make_plant: filter constant l must be positive");
    }
    SwitchedPlant p;
    p.time = schedule_ab.start_time();
    p.anchor = p.time;
    p.schedule_ab = std::move(schedule_ab);
    p.x_anchor = x0;
    p.x = std::move(x0);
    p.kx = std::move(kx);
    p.kr = std::move(kr);
    p.r = std::move(r);
    p.l = l;
    p.phi_bar = Matrix(nx + mu, 1);
    p.decay = 1.0;
    p.decay_mode = mode;
    return p;
}

/// Rank test of [B, AB, ..., A^{n-1}B] through the smallest eigenvalue of C C^T.
inline bool controllable(const Matrix& a, const Matrix& b, double tol = 1e-10) {
    const std::size_t n = a.rows();
    Matrix c(n, n * b.cols());
    Matrix blk = b;
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < b.cols(); ++j) {
                c(i, k * b.cols() + j) = blk(i, j);
            }
        }
        blk = a * blk;
    }
    return min_eigenvalue(c * c.transpose()) > tol;
}

/// Control input u = Kx x + Kr r(t).
inline Matrix plant_input(const SwitchedPlant& p, double t) {
    return p.kx * p.x + p.kr * p.r.at(t);
}

/// One explicit Euler step of the plant and of its regression filter. The
/// filter is driven by [x; u] taken before the state update.
inline SwitchedPlant plant_step(SwitchedPlant p, double t, double dt) {
    if (!(dt > 0.0)) {
        throw ContractError("plant_step: dt must be positive");
    }
    const Matrix u = plant_input(p, t);
    const Matrix drive = vstack({&p.x, &u});
    const Matrix dx = p.a_at(t) * p.x + p.b_at(t) * u;
    p.x.add_scaled(dx, dt);
    p.phi_bar.add_scaled(drive - p.l * p.phi_bar, dt);
    p.time = t + dt;
    if (p.decay_mode == DecayMode::euler) {
        p.decay *= 1.0 - p.l * dt;
    } else {
        p.decay = std::exp(-p.l * (p.time - p.anchor));
    }
    if (!p.x.all_finite() || !p.phi_bar.all_finite()) {
        throw DivergenceError("plant_step: non-finite plant state", t);
    }
    return p;
}

/// phi = [phi_bar; e^{-l (t - anchor)}] and y = (x - l * x_bar)^T.
inline RegressionSample parameterize_plant(const SwitchedPlant& p, double t) {
    Matrix phi(p.phi_bar.rows() + 1, 1);
    for (std::size_t i = 0; i < p.phi_bar.rows(); ++i) {
        phi(i, 0) = p.phi_bar(i, 0);
    }
    phi(p.phi_bar.rows(), 0) = p.decay;
    Matrix y(1, p.nx());
    for (std::size_t i = 0; i < p.nx(); ++i) {
        y(0, i) = p.x(i, 0) - p.l * p.phi_bar(i, 0);
    }
    if (!phi.all_finite() || !y.all_finite()) {
        throw DivergenceError("parameterize_plant: non-finite regression", t);
    }
    return {t, std::move(phi), std::move(y)};
}

/// Zeroes the regression filter at `t_hat`; the plant state is untouched.
inline SwitchedPlant reset_plant_filter(SwitchedPlant p, double t_hat) {
    const double tol = 1e-9 * (1.0 + std::abs(p.time));
    if (t_hat < p.anchor - tol) {
        throw ContractError("reset_plant_filter: t_hat precedes the current anchor");
    }
    if (t_hat > p.time + tol) {
        throw ContractError("reset_plant_filter: t_hat lies ahead of the plant clock");
    }
    p.phi_bar.set_zero();
    p.anchor = t_hat;
    p.x_anchor = p.x;
    p.decay = 1.0;
    return p;
}

}  // namespace pcid
