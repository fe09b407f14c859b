#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "pcid/errors.hpp"
#include "pcid/matrix.hpp"

namespace pcid {

namespace detail {

inline void require_square(const Matrix& m, const char* who) {
    if (!m.is_square() || m.rows() == 0) {
        throw DimensionError(std::string(who) + ": expected non-empty square matrix, got " + m.shape());
    }
}

// Cofactor expansion along the first row. Used for n <= 4 where it is exact
// on singular inputs and cheap enough.
inline double det_cofactor(const Matrix& m) {
    const std::size_t n = m.rows();
    switch (n) {
        case 1:
            return m(0, 0);
        case 2:
            return m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
        case 3:
            return m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) -
                   m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
                   m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
        default:
            break;
    }
    double acc = 0.0;
    double sign = 1.0;
    Matrix minor(n - 1, n - 1);
    for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t i = 1; i < n; ++i) {
            std::size_t jj = 0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j != c) {
                    minor(i - 1, jj++) = m(i, j);
                }
            }
        }
        acc += sign * m(0, c) * det_cofactor(minor);
        sign = -sign;
    }
    return acc;
}

inline double det_lu(Matrix a) {
    const std::size_t n = a.rows();
    double det = 1.0;
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        for (std::size_t i = k + 1; i < n; ++i) {
            if (std::abs(a(i, k)) > std::abs(a(piv, k))) {
                piv = i;
            }
        }
        if (a(piv, k) == 0.0) {
            return 0.0;
        }
        if (piv != k) {
            for (std::size_t j = 0; j < n; ++j) {
                std::swap(a(k, j), a(piv, j));
            }
            det = -det;
        }
        det *= a(k, k);
        for (std::size_t i = k + 1; i < n; ++i) {
            const double f = a(i, k) / a(k, k);
            for (std::size_t j = k + 1; j < n; ++j) {
                a(i, j) -= f * a(k, j);
            }
        }
    }
    return det;
}

inline double det_any(const Matrix& m) {
    return m.rows() <= 4 ? det_cofactor(m) : det_lu(m);
}

inline Matrix minor_of(const Matrix& m, std::size_t r, std::size_t c) {
    const std::size_t n = m.rows();
    Matrix out(n - 1, n - 1);
    std::size_t ii = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (i == r) {
            continue;
        }
        std::size_t jj = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != c) {
                out(ii, jj++) = m(i, j);
            }
        }
        ++ii;
    }
    return out;
}

inline void require_finite(const Matrix& m, const char* who) {
    if (!m.all_finite()) {
        throw ContractError(std::string(who) + ": non-finite entry");
    }
}

}  // namespace detail

/// det(M). Closed form or cofactor expansion up to 4x4, pivoted LU above.
inline double determinant(const Matrix& m) {
    detail::require_square(m, "determinant");
    detail::require_finite(m, "determinant");
    return detail::det_any(m);
}

/// adj(M), the transposed cofactor matrix, so that adj(M) * M = det(M) * I.
/// Well defined for singular M; the 1x1 adjugate is [[1]].
inline Matrix adjugate(const Matrix& m) {
    detail::require_square(m, "adjugate");
    detail::require_finite(m, "adjugate");
    const std::size_t n = m.rows();
    if (n == 1) {
        return Matrix(1, 1, 1.0);
    }
    Matrix adj(n, n);
    if (n == 2) {
        adj(0, 0) = m(1, 1);
        adj(0, 1) = -m(0, 1);
        adj(1, 0) = -m(1, 0);
        adj(1, 1) = m(0, 0);
        return adj;
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double sign = ((i + j) % 2 == 0) ? 1.0 : -1.0;
            adj(j, i) = sign * detail::det_any(detail::minor_of(m, i, j));
        }
    }
    return adj;
}

/// Tolerance on |S(i,j) - S(j,i)| accepted by min_eigenvalue.
inline constexpr double kSymmetryTolerance = 1e-9;

/// Smallest eigenvalue of a symmetric matrix. Closed form up to 2x2, cyclic
/// Jacobi rotations otherwise.
inline double min_eigenvalue(const Matrix& s) {
    detail::require_square(s, "min_eigenvalue");
    detail::require_finite(s, "min_eigenvalue");
    const std::size_t n = s.rows();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (std::abs(s(i, j) - s(j, i)) > kSymmetryTolerance) {
                throw ContractError("min_eigenvalue: matrix is not symmetric");
            }
        }
    }
    if (n == 1) {
        return s(0, 0);
    }
    if (n == 2) {
        const double a = s(0, 0);
        const double d = s(1, 1);
        const double b = 0.5 * (s(0, 1) + s(1, 0));
        const double mean = 0.5 * (a + d);
        const double r = std::hypot(0.5 * (a - d), b);
        // For a positive mean the small root is recovered from det / large root,
        // which stays accurate when the matrix is nearly singular.
        if (mean > 0.0) {
            return (a * d - b * b) / (mean + r);
        }
        return mean - r;
    }

    Matrix a = s;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double avg = 0.5 * (a(i, j) + a(j, i));
            a(i, j) = avg;
            a(j, i) = avg;
        }
    }
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        double diag = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            diag += a(i, i) * a(i, i);
            for (std::size_t j = i + 1; j < n; ++j) {
                off += a(i, j) * a(i, j);
            }
        }
        if (off <= 1e-32 * diag || off == 0.0) {
            break;
        }
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) {
                    continue;
                }
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - sn * akq;
                    a(k, q) = sn * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - sn * aqk;
                    a(q, k) = sn * apk + c * aqk;
                }
            }
        }
    }
    double lo = a(0, 0);
    for (std::size_t i = 1; i < n; ++i) {
        lo = std::min(lo, a(i, i));
    }
    return lo;
}

}  // namespace pcid
