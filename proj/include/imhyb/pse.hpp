#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "imhyb/approximators.hpp"
#include "imhyb/errors.hpp"
#include "imhyb/lm.hpp"
#include "imhyb/numerics/dense.hpp"
#include "imhyb/numerics/series.hpp"
#include "imhyb/rng.hpp"
#include "imhyb/systems.hpp"

namespace imhyb {

using numerics::TruncSeries;

struct PseSolution {
    MultiIndexBasis basis;
    DenseMatrix coeffs;                  // N x basis.size(), constant column 0
    std::vector<double> order_residuals;  // ||M u + R_k|| for k = 1..h

    [[nodiscard]] PolyParams as_poly() const {
        PolyParams p(Family::Power, static_cast<int>(coeffs.rows()), basis.M, basis.h);
        p.a = coeffs;
        return p;
    }
};

namespace detail {

/// sum_alpha c_alpha z^alpha over the first c.size() graded-lex monomials.
inline TruncSeries compose_poly(const Eigen::Ref<const Eigen::RowVectorXd>& c, const MultiIndexBasis& basis,
                                const std::vector<std::vector<TruncSeries>>& zpow) {
    const TruncSeries& one = zpow[0][0];
    TruncSeries r(one.num_vars(), one.cap());
    for (Index k = 0; k < c.size(); ++k) {
        if (c(k) == 0.0) continue;
        const MultiIndex& al = basis.indices[static_cast<std::size_t>(k)];
        TruncSeries t = zpow[0][static_cast<std::size_t>(al[0])];
        for (std::size_t m = 1; m < al.size(); ++m) t = t * zpow[m][static_cast<std::size_t>(al[m])];
        r += c(k) * t;
    }
    return r;
}

/// zpow[m][e] = z_m^e for e = 0..cap.
inline std::vector<std::vector<TruncSeries>> powers(const std::vector<TruncSeries>& z, int cap) {
    std::vector<std::vector<TruncSeries>> out;
    for (const TruncSeries& zm : z) {
        std::vector<TruncSeries> p;
        p.push_back(TruncSeries::constant(zm.num_vars(), zm.cap(), 1.0));
        for (int e = 1; e <= cap; ++e) p.push_back(p.back() * zm);
        out.push_back(std::move(p));
    }
    return out;
}

/// NFE residual pi(Ay + g(y)) - B pi(y) - C y - f(pi(y), y) as series in y
/// truncated at degree cap, for coefficients c over basis (power family).
inline std::vector<TruncSeries> nfe_residual_series(const systems::SystemModel& sys, const DenseMatrix& c,
                                                    const MultiIndexBasis& basis, int cap) {
    const int M = sys.M;
    const int N = sys.N;
    std::vector<TruncSeries> Y;
    for (int j = 0; j < M; ++j) Y.push_back(TruncSeries::variable(M, cap, j));
    std::vector<TruncSeries> Z = sys.g_series(Y);
    for (int m = 0; m < M; ++m) {
        for (int j = 0; j < M; ++j) {
            if (sys.A(m, j) != 0.0) Z[static_cast<std::size_t>(m)] += sys.A(m, j) * Y[static_cast<std::size_t>(j)];
        }
    }
    const auto ypow = powers(Y, cap);
    const auto zpow = powers(Z, cap);
    const Index used = std::min<Index>(c.cols(), static_cast<Index>(numerics::binomial(
                                                     static_cast<std::size_t>(M + cap), static_cast<std::size_t>(cap))));
    std::vector<TruncSeries> X;
    std::vector<TruncSeries> R;
    for (int n = 0; n < N; ++n) {
        X.push_back(compose_poly(c.row(n).head(used), basis, ypow));
        R.push_back(compose_poly(c.row(n).head(used), basis, zpow));
    }
    const std::vector<TruncSeries> fs = sys.f_series(X, Y);
    for (int n = 0; n < N; ++n) {
        TruncSeries& r = R[static_cast<std::size_t>(n)];
        for (int i = 0; i < N; ++i) {
            if (sys.B(n, i) != 0.0) r -= sys.B(n, i) * X[static_cast<std::size_t>(i)];
        }
        for (int j = 0; j < M; ++j) {
            if (sys.C(n, j) != 0.0) r -= sys.C(n, j) * Y[static_cast<std::size_t>(j)];
        }
        r -= fs[static_cast<std::size_t>(n)];
    }
    return R;
}

}  // namespace detail

/// Residual series of a power-series manifold candidate, for checking the
/// order-matching property.
inline std::vector<TruncSeries> nfe_residual_series(const systems::SystemModel& sys, const PolyParams& poly) {
    if (poly.family != Family::Power) throw ConfigError("series residual needs power-family coefficients");
    return detail::nfe_residual_series(sys, poly.a, poly.basis, poly.h());
}

/// Power-series expansion of the invariant manifold, solved order by order.
/// The order-k coefficients satisfy (I_N (x) T_k - B (x) I) u = -R_k where
/// T_k maps the coefficients of p(y) to those of p(Ay) in degree k and R_k is
/// the degree-k part of the residual built from the lower orders.
inline PseSolution pse_solve(const systems::SystemModel& sys, int h) {
    if (h < 0) throw DimensionMismatch("PSE degree must be non-negative");
    const int N = sys.N;
    const int M = sys.M;
    PseSolution sol;
    sol.basis = MultiIndexBasis(M, h);
    sol.coeffs = DenseMatrix::Zero(N, sol.basis.size());

    for (int k = 1; k <= h; ++k) {
        const auto& layout = numerics::SeriesLayout::get(M, k);
        const Index lo = static_cast<Index>(layout->degree_begin(k));
        const Index Kk = static_cast<Index>(layout->size()) - lo;

        // T_k: column beta holds (Ay)^beta restricted to degree k.
        std::vector<TruncSeries> Ay;
        for (int m = 0; m < M; ++m) {
            TruncSeries s(M, k);
            for (int j = 0; j < M; ++j) s += sys.A(m, j) * TruncSeries::variable(M, k, j);
            Ay.push_back(std::move(s));
        }
        const auto apow = detail::powers(Ay, k);
        DenseMatrix T(Kk, Kk);
        for (Index b = 0; b < Kk; ++b) {
            const MultiIndex& beta = sol.basis.indices[static_cast<std::size_t>(lo + b)];
            TruncSeries t = apow[0][static_cast<std::size_t>(beta[0])];
            for (int m = 1; m < M; ++m) t = t * apow[static_cast<std::size_t>(m)][static_cast<std::size_t>(beta[m])];
            for (Index g = 0; g < Kk; ++g) T(g, b) = t[static_cast<std::size_t>(lo + g)];
        }

        const auto R = detail::nfe_residual_series(sys, sol.coeffs, sol.basis, k);
        DenseMatrix Msys = DenseMatrix::Zero(N * Kk, N * Kk);
        Vector rhs(N * Kk);
        for (int n = 0; n < N; ++n) {
            Msys.block(n * Kk, n * Kk, Kk, Kk) += T;
            for (int i = 0; i < N; ++i) {
                if (sys.B(n, i) != 0.0) Msys.block(n * Kk, i * Kk, Kk, Kk).diagonal().array() -= sys.B(n, i);
            }
            for (Index g = 0; g < Kk; ++g) rhs(n * Kk + g) = -R[static_cast<std::size_t>(n)][static_cast<std::size_t>(lo + g)];
        }
        Vector u;
        try {
            u = numerics::lu_solve(Msys, rhs, 1e-12);
        } catch (const SingularSystem& e) {
            throw ResonantOrder("order " + std::to_string(k) + " system is singular: " + e.what());
        }
        sol.order_residuals.push_back((Msys * u - rhs).norm());
        for (int n = 0; n < N; ++n) sol.coeffs.row(n).segment(lo, Kk) = u.segment(n * Kk, Kk).transpose();
    }
    return sol;
}

// ---------------------------------------------------------------------------
// Quadrature

/// n-point Gauss-Legendre nodes and weights on [-1, 1].
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n) {
    std::vector<double> x(static_cast<std::size_t>(n));
    std::vector<double> w(static_cast<std::size_t>(n));
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0;
            double p1 = z;
            for (int l = 1; l < n; ++l) {
                const double p2 = ((2.0 * l + 1.0) * z * p1 - l * p0) / (l + 1.0);
                p0 = p1;
                p1 = p2;
            }
            dp = n * (z * p1 - p0) / (z * z - 1.0);
            const double dz = p1 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) break;
        }
        x[static_cast<std::size_t>(i)] = -z;
        x[static_cast<std::size_t>(n - 1 - i)] = z;
        const double wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[static_cast<std::size_t>(i)] = wi;
        w[static_cast<std::size_t>(n - 1 - i)] = wi;
    }
    return {x, w};
}

namespace detail {

inline double gl_panel(const std::function<double(double)>& fn, double a, double b) {
    static const auto rule = gauss_legendre(20);
    const double c = 0.5 * (a + b);
    const double hw = 0.5 * (b - a);
    double s = 0.0;
    for (std::size_t i = 0; i < rule.first.size(); ++i) s += rule.second[i] * fn(c + hw * rule.first[i]);
    return s * hw;
}

inline double adaptive(const std::function<double(double)>& fn, double a, double b, double whole, double tol,
                       int depth) {
    const double m = 0.5 * (a + b);
    const double left = gl_panel(fn, a, m);
    const double right = gl_panel(fn, m, b);
    const double diff = std::abs(left + right - whole);
    if (diff <= tol) return left + right;
    if (depth == 0) {
        throw QuadratureNotConverged("refinement disagreement " + std::to_string(diff) + " above tolerance");
    }
    return adaptive(fn, a, m, left, 0.5 * tol, depth - 1) + adaptive(fn, m, b, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

/// Adaptive Gauss-Legendre; throws QuadratureNotConverged if successive
/// refinements still differ by more than tol after max_depth bisections.
inline double integrate(const std::function<double(double)>& fn, double a, double b, double tol = 1e-9,
                        int max_depth = 40) {
    return detail::adaptive(fn, a, b, detail::gl_panel(fn, a, b), tol, max_depth);
}

/// Orthogonal-series coefficients of ln(1+y) on [-1, 1].
/// Legendre: alpha_i = (2i+1)/2 int ln(1+y) P_i(y) dy.
/// Chebyshev2: alpha_i = (2/pi) int ln(1+y) U_i(y) sqrt(1-y^2) dy, computed
/// in theta with y = cos(theta).
/// The logarithmic endpoint singularity is removed by 1+y = 2 s^4 (Legendre)
/// and theta = pi (1 - s^4) (Chebyshev2).
inline Vector ln_orthogonal_coeffs(Family family, int h) {
    if (h < 1) throw DimensionMismatch("series degree must be >= 1");
    Vector alpha(h + 1);
    std::vector<double> P(static_cast<std::size_t>(h + 1));
    for (int i = 0; i <= h; ++i) {
        std::function<double(double)> fn;
        if (family == Family::Legendre) {
            fn = [&, i](double s) {
                if (s <= 0.0) return 0.0;
                const double s4 = s * s * s * s;
                const double y = -1.0 + 2.0 * s4;
                basis_values(Family::Legendre, i, y, P.data());
                return (std::numbers::ln2 + 4.0 * std::log(s)) * P[static_cast<std::size_t>(i)] * 8.0 * s * s * s;
            };
            alpha(i) = 0.5 * (2.0 * i + 1.0) * integrate(fn, 0.0, 1.0);
        } else if (family == Family::Chebyshev2) {
            fn = [i](double s) {
                if (s <= 0.0) return 0.0;
                const double s4 = s * s * s * s;
                const double th = std::numbers::pi * (1.0 - s4);
                const double lg = std::numbers::ln2 + 2.0 * std::log(std::sin(0.5 * std::numbers::pi * s4));
                return lg * std::sin((i + 1.0) * th) * std::sin(th) * 4.0 * std::numbers::pi * s * s * s;
            };
            alpha(i) = (2.0 / std::numbers::pi) * integrate(fn, 0.0, 1.0);
        } else {
            throw ConfigError("orthogonal coefficients need the legendre or chebyshev2 family");
        }
    }
    return alpha;
}

/// Power-series coefficients (-1)^{i+1}/i of ln(1+y), with alpha_0 = 0.
inline Vector ln_power_coeffs(int h) {
    Vector a = Vector::Zero(h + 1);
    for (int i = 1; i <= h; ++i) a(i) = ((i % 2) ? 1.0 : -1.0) / i;
    return a;
}

/// Univariate single-output series as a PolyParams.
inline PolyParams univariate_series(Family family, const Vector& alpha) {
    PolyParams p(family, 1, 1, static_cast<int>(alpha.size()) - 1);
    p.a.row(0) = alpha.transpose();
    return p;
}

// ---------------------------------------------------------------------------
// Linear vs nonlinear polynomial regression of 1 - exp(-10 x^2) on [-0.3, 0.3]

struct RegressionDemo {
    Vector mp_coeffs;
    Vector lm_coeffs;
    double mp_max_err = 0.0;
    double lm_max_err = 0.0;
    LmResult lm;
    std::vector<double> grid;
    std::vector<double> mp_abs_err;
    std::vector<double> lm_abs_err;
};

inline double gaussian_profile(double x) { return 1.0 - std::exp(-10.0 * x * x); }

namespace detail {

struct VandermondeProblem {
    const DenseMatrix& V;
    const Vector& f;

    // residual_q = f(x_q) - sum_i c_i x_q^i, derivative -(x_q)^i
    [[nodiscard]] Vector residuals(const Vector& c) const { return f - V * c; }
    [[nodiscard]] DenseMatrix jacobian(const Vector&) const { return -V; }
};

inline double horner(const Vector& c, double x) {
    double s = 0.0;
    for (Index i = c.size(); i-- > 0;) s = s * x + c(i);
    return s;
}

}  // namespace detail

/// Fits the degree-h power series to Q uniform samples both by the
/// pseudo-inverse of the Vandermonde system and by LM from zero coefficients;
/// errors are measured on a 1001-point grid.
inline RegressionDemo gaussian_regression_demo(int h, int Q = 200, std::uint64_t seed = 0,
                                               const LmConfig& cfg = {}) {
    if (h < 0) throw ConfigError("degree must be non-negative");
    if (Q < h + 1) throw ConfigError("need Q >= h + 1 samples for a degree-" + std::to_string(h) + " fit");
    CounterRng rng(seed);
    Vector x(Q);
    Vector f(Q);
    for (int q = 0; q < Q; ++q) {
        x(q) = rng.uniform(-0.3, 0.3);
        f(q) = gaussian_profile(x(q));
    }
    DenseMatrix V(Q, h + 1);
    for (int q = 0; q < Q; ++q) {
        double p = 1.0;
        for (int i = 0; i <= h; ++i) {
            V(q, i) = p;
            p *= x(q);
        }
    }
    RegressionDemo out;
    out.mp_coeffs = numerics::pinv_solve(V, f);
    detail::VandermondeProblem prob{V, f};
    out.lm = lm_minimize(prob, Vector::Zero(h + 1), cfg);
    out.lm_coeffs = out.lm.params;

    const int G = 1001;
    for (int g = 0; g < G; ++g) {
        const double xg = -0.3 + 0.6 * g / (G - 1);
        const double fg = gaussian_profile(xg);
        const double em = std::abs(fg - detail::horner(out.mp_coeffs, xg));
        const double el = std::abs(fg - detail::horner(out.lm_coeffs, xg));
        out.grid.push_back(xg);
        out.mp_abs_err.push_back(em);
        out.lm_abs_err.push_back(el);
        out.mp_max_err = std::max(out.mp_max_err, em);
        out.lm_max_err = std::max(out.lm_max_err, el);
    }
    return out;
}

}  // namespace imhyb
