#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "imhyb/errors.hpp"
#include "imhyb/numerics/dense.hpp"
#include "imhyb/numerics/series.hpp"

namespace imhyb::systems {

using numerics::DenseMatrix;
using numerics::TruncSeries;
using numerics::Vector;

/// Axis-aligned box in R^M.
struct Box {
    std::vector<double> lo;
    std::vector<double> hi;

    [[nodiscard]] bool contains(const Vector& y) const {
        for (Eigen::Index m = 0; m < y.size(); ++m) {
            if (y(m) < lo[static_cast<std::size_t>(m)] || y(m) > hi[static_cast<std::size_t>(m)]) {
                return false;
            }
        }
        return true;
    }
};

/// Skew-product map in deviation coordinates:
///   x+ = B x + C y + f(x, y),   y+ = A y + g(y),
/// with f, g vanishing to second order at the origin. f and g are available
/// over reals and over truncated series so that Taylor data can be lifted.
class SystemModel {
public:
    using RealF = std::function<Vector(const Vector&, const Vector&)>;
    using RealG = std::function<Vector(const Vector&)>;
    using SeriesF = std::function<std::vector<TruncSeries>(const std::vector<TruncSeries>&,
                                                           const std::vector<TruncSeries>&)>;
    using SeriesG = std::function<std::vector<TruncSeries>(const std::vector<TruncSeries>&)>;
    using Guard = std::function<void(const Vector&)>;

    std::string label;
    int N = 0;
    int M = 0;
    DenseMatrix A;
    DenseMatrix B;
    DenseMatrix C;
    Box domain;
    /// Raw-coordinate equilibrium; zero for systems defined in deviation form.
    Vector x_offset;
    Vector y_offset;

    RealF f_real;
    SeriesF f_series;
    RealG g_real;
    SeriesG g_series;
    /// Throws DomainViolation when y is outside the region where g is defined.
    Guard guard = [](const Vector&) {};

    /// Wraps a circuit type providing
    ///   template <class T> std::vector<T> f(const std::vector<T>& x, const std::vector<T>& y) const;
    ///   template <class T> std::vector<T> g(const std::vector<T>& y) const;
    template <class Circuit>
    void set_circuit(Circuit circuit) {
        auto c = std::make_shared<const Circuit>(std::move(circuit));
        f_real = [c](const Vector& x, const Vector& y) {
            std::vector<double> xs(x.data(), x.data() + x.size());
            std::vector<double> ys(y.data(), y.data() + y.size());
            auto r = c->template f<double>(xs, ys);
            return Vector(Eigen::Map<const Vector>(r.data(), static_cast<Eigen::Index>(r.size())));
        };
        f_series = [c](const std::vector<TruncSeries>& x, const std::vector<TruncSeries>& y) {
            return c->template f<TruncSeries>(x, y);
        };
        g_real = [c](const Vector& y) {
            std::vector<double> ys(y.data(), y.data() + y.size());
            auto r = c->template g<double>(ys);
            return Vector(Eigen::Map<const Vector>(r.data(), static_cast<Eigen::Index>(r.size())));
        };
        g_series = [c](const std::vector<TruncSeries>& y) { return c->template g<TruncSeries>(y); };
    }

    [[nodiscard]] Vector f(const Vector& x, const Vector& y) const { return f_real(x, y); }
    [[nodiscard]] Vector g(const Vector& y) const { return g_real(y); }

    /// A y + g(y), after the domain guard.
    [[nodiscard]] Vector driver_step(const Vector& y) const {
        guard(y);
        return A * y + g_real(y);
    }

    /// df/dx at (x, y) through a first-order series lift in the N state
    /// variables.
    [[nodiscard]] DenseMatrix jac_f_x(const Vector& x, const Vector& y) const {
        std::vector<TruncSeries> xs;
        std::vector<TruncSeries> ys;
        xs.reserve(static_cast<std::size_t>(N));
        ys.reserve(static_cast<std::size_t>(M));
        for (int i = 0; i < N; ++i) xs.push_back(TruncSeries::variable(N, 1, i, x(i)));
        for (int j = 0; j < M; ++j) ys.push_back(TruncSeries::constant(N, 1, y(j)));
        const auto fs = f_series(xs, ys);
        DenseMatrix J(N, N);
        for (int n = 0; n < N; ++n) {
            for (int i = 0; i < N; ++i) J(n, i) = fs[static_cast<std::size_t>(n)][static_cast<std::size_t>(1 + i)];
        }
        return J;
    }
};

/// One step of the map.
inline std::pair<Vector, Vector> step(const SystemModel& sys, const Vector& x, const Vector& y) {
    sys.guard(y);
    Vector xn = sys.B * x + sys.C * y + sys.f_real(x, y);
    Vector yn = sys.A * y + sys.g_real(y);
    return {std::move(xn), std::move(yn)};
}

struct ResonanceWitness {
    std::vector<int> d;  // exponents over the eigenvalues of A
    int j = 0;           // index into eig_B
    double distance = 0.0;
};

struct AssumptionReport {
    std::vector<std::complex<double>> eig_A;
    std::vector<std::complex<double>> eig_B;
    bool all_inside_or_outside_unit_disc = false;
    bool nonzero_eigs = false;
    std::optional<ResonanceWitness> resonance_found;
    int d_max_checked = 0;
    double tol = 0.0;

    [[nodiscard]] bool passed() const {
        return all_inside_or_outside_unit_disc && nonzero_eigs && !resonance_found;
    }
};

/// Existence conditions for an analytic invariant manifold: spectrum of A
/// nonzero and strictly on one side of the unit circle, and no resonance
/// prod k_i^{d_i} = lambda_j for 1 <= sum d_i <= d_max.
inline AssumptionReport check_assumptions(const SystemModel& sys, int d_max = 50, double tol = 1e-10) {
    AssumptionReport rep;
    rep.eig_A = numerics::eigvals(sys.A);
    rep.eig_B = numerics::eigvals(sys.B);
    rep.d_max_checked = d_max;
    rep.tol = tol;

    rep.nonzero_eigs = true;
    bool inside = true;
    bool outside = true;
    for (const auto& k : rep.eig_A) {
        const double r = std::abs(k);
        if (r <= tol) rep.nonzero_eigs = false;
        if (!(r < 1.0)) inside = false;
        if (!(r > 1.0)) outside = false;
    }
    rep.all_inside_or_outside_unit_disc = inside || outside;

    const int M = static_cast<int>(rep.eig_A.size());
    if (M == 0) return rep;
    for (const auto& d : numerics::graded_lex_indices(M, d_max)) {
        if (numerics::total_degree(d) == 0) continue;
        std::complex<double> prod = 1.0;
        for (int i = 0; i < M; ++i) {
            for (int e = 0; e < d[static_cast<std::size_t>(i)]; ++e) prod *= rep.eig_A[static_cast<std::size_t>(i)];
        }
        for (std::size_t j = 0; j < rep.eig_B.size(); ++j) {
            const double dist = std::abs(prod - rep.eig_B[j]);
            if (dist < tol) {
                rep.resonance_found = ResonanceWitness{d, static_cast<int>(j), dist};
                return rep;
            }
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Enzymatic bioreactor

struct BioreactorParams {
    double k1 = 0.082;
    double k2 = 0.59;
    double kd1 = 0.0034;
    double vr = 2.0;
    double S0 = 3.4;
    double delta = 0.01;
};

namespace detail {

struct BioreactorCircuit {
    double num;  // delta k1 / (1 - k2 S0)
    double k2;
    double base;  // 1 - k2 S0

    template <class T>
    std::vector<T> f(const std::vector<T>& x, const std::vector<T>& y) const {
        return {num * (y[0] * x[0]) / (base - k2 * x[0])};
    }
    template <class T>
    std::vector<T> g(const std::vector<T>& y) const {
        return {0.0 * y[0]};
    }
};

}  // namespace detail

inline SystemModel bioreactor(const BioreactorParams& p = {}) {
    SystemModel s;
    s.label = "bioreactor";
    s.N = 1;
    s.M = 1;
    const double base = 1.0 - p.k2 * p.S0;
    s.A = DenseMatrix::Constant(1, 1, 1.0 - p.delta * p.kd1);
    s.B = DenseMatrix::Constant(1, 1, 1.0 - p.delta * p.vr);
    s.C = DenseMatrix::Constant(1, 1, p.delta * p.k1 * p.S0 / base);
    s.domain = Box{{0.0}, {4.0}};
    s.x_offset = Vector::Zero(1);
    s.y_offset = Vector::Zero(1);
    s.set_circuit(detail::BioreactorCircuit{p.delta * p.k1 / base, p.k2, base});
    return s;
}

// ---------------------------------------------------------------------------
// Analytic example with invariant manifold x = ln(1 + y)

namespace detail {

struct LnCircuit {
    double beta;

    template <class T>
    std::vector<T> f(const std::vector<T>& x, const std::vector<T>&) const {
        return {0.0 * x[0]};
    }
    template <class T>
    std::vector<T> g(const std::vector<T>& y) const {
        using std::exp;
        using std::pow;
        using numerics::exp;
        using numerics::pow;
        return {pow(1.0 + y[0], beta) * exp(y[0]) - (1.0 + beta) * y[0] - 1.0};
    }
};

}  // namespace detail

inline SystemModel ln_example(double beta = -0.4) {
    SystemModel s;
    s.label = "ln_example";
    s.N = 1;
    s.M = 1;
    s.A = DenseMatrix::Constant(1, 1, 1.0 + beta);
    s.B = DenseMatrix::Constant(1, 1, beta);
    s.C = DenseMatrix::Constant(1, 1, 1.0);
    s.domain = Box{{-0.9}, {2.0}};
    s.x_offset = Vector::Zero(1);
    s.y_offset = Vector::Zero(1);
    s.set_circuit(detail::LnCircuit{beta});
    s.guard = [](const Vector& y) {
        if (!(y(0) > -1.0)) throw DomainViolation("ln example requires y > -1, got " + std::to_string(y(0)));
    };
    return s;
}

/// Exact invariant manifold of ln_example, for any beta.
inline double ln_exact_map(double y) {
    if (!(y > -1.0)) throw DomainViolation("ln(1+y) needs y > -1");
    return std::log1p(y);
}

// ---------------------------------------------------------------------------
// Car-following platoon with an autonomous damped-oscillator leader

struct CarFollowingParams {
    int Nc = 10;
    double tau = 0.65;
    double gamma = 1.0 / 15.0;
    double beta = 1.5;
    double v0 = 33.3;
    double tau_l = 10.0;
    double mu = 1.0;
    /// Desired leader velocity; NaN selects v0 / 2.
    double v_des = std::numeric_limits<double>::quiet_NaN();
    double delta = 0.05;

    [[nodiscard]] double desired_velocity() const { return std::isnan(v_des) ? v0 / 2.0 : v_des; }
};

/// Optimal velocity function over reals or series.
template <class T>
T optimal_velocity(const CarFollowingParams& p, const T& h) {
    using std::tanh;
    using numerics::tanh;
    const double tb = std::tanh(p.beta);
    return (p.v0 / (1.0 + tb)) * (tanh(p.gamma * h - p.beta) + tb);
}

/// Headway with V(h) = v, by bisection on [0, 10/gamma].
inline double inverse_optimal_velocity(const CarFollowingParams& p, double v, double tol = 1e-12) {
    double lo = 0.0;
    double hi = 10.0 / p.gamma;
    if (!(v > optimal_velocity(p, lo) && v < optimal_velocity(p, hi))) {
        throw InfeasibleEquilibrium("velocity " + std::to_string(v) + " outside V([0, 10/gamma])");
    }
    while (hi - lo > tol * std::max(1.0, hi)) {
        const double mid = 0.5 * (lo + hi);
        if (optimal_velocity(p, mid) < v) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

namespace detail {

/// Raw platoon map; state [h_1..h_Nc, v_1..v_Nc], leader [z, v_l].
struct CarFollowingRaw {
    CarFollowingParams p;
    double v_des;

    template <class T>
    std::vector<T> follower(const std::vector<T>& x, const std::vector<T>& y) const {
        const auto nc = static_cast<std::size_t>(p.Nc);
        std::vector<T> out;
        out.reserve(2 * nc);
        for (std::size_t i = 0; i < nc; ++i) {
            const T& ahead = (i + 1 < nc) ? x[nc + i + 1] : y[1];
            out.push_back(x[i] + p.delta * (ahead - x[nc + i]));
        }
        for (std::size_t i = 0; i < nc; ++i) {
            out.push_back(x[nc + i] + (p.delta / p.tau) * (optimal_velocity(p, x[i]) - x[nc + i]));
        }
        return out;
    }

    template <class T>
    std::vector<T> leader(const std::vector<T>& y) const {
        return {y[0] + p.delta * (y[1] - v_des),
                y[1] - p.delta * ((1.0 / p.tau_l) * (y[1] - v_des) + p.mu * y[0])};
    }
};

/// Deviation-coordinate nonlinearities of a raw map around (x0, y0):
/// f = F(x0 + x, y0 + y) - F(x0, y0) - B x - C y, g = G(y0 + y) - G(y0) - A y.
/// Subtracting F(x0, y0) rather than x0 keeps the origin exactly fixed even
/// though x0 itself comes from a root finder.
template <class Raw>
struct DeviationCircuit {
    Raw raw;
    std::vector<double> x0;
    std::vector<double> y0;
    DenseMatrix A;
    DenseMatrix B;
    DenseMatrix C;
    std::vector<double> Fx0;
    std::vector<double> Gy0;

    template <class T>
    std::vector<T> f(const std::vector<T>& x, const std::vector<T>& y) const {
        std::vector<T> xs = x;
        std::vector<T> ys = y;
        for (std::size_t i = 0; i < xs.size(); ++i) xs[i] += x0[i];
        for (std::size_t j = 0; j < ys.size(); ++j) ys[j] += y0[j];
        std::vector<T> out = raw.follower(xs, ys);
        for (std::size_t n = 0; n < out.size(); ++n) {
            out[n] -= Fx0[n];
            for (std::size_t i = 0; i < x.size(); ++i) {
                const double b = B(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(i));
                if (b != 0.0) out[n] -= b * x[i];
            }
            for (std::size_t j = 0; j < y.size(); ++j) {
                const double c = C(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(j));
                if (c != 0.0) out[n] -= c * y[j];
            }
        }
        return out;
    }

    template <class T>
    std::vector<T> g(const std::vector<T>& y) const {
        std::vector<T> ys = y;
        for (std::size_t j = 0; j < ys.size(); ++j) ys[j] += y0[j];
        std::vector<T> out = raw.leader(ys);
        for (std::size_t m = 0; m < out.size(); ++m) {
            out[m] -= Gy0[m];
            for (std::size_t j = 0; j < y.size(); ++j) {
                const double a = A(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(j));
                if (a != 0.0) out[m] -= a * y[j];
            }
        }
        return out;
    }
};

}  // namespace detail

inline SystemModel car_following(const CarFollowingParams& p = {}) {
    if (p.Nc < 1) throw InfeasibleEquilibrium("need at least one follower");
    const double v_des = p.desired_velocity();
    if (!(v_des > 0.0 && v_des < p.v0)) {
        throw InfeasibleEquilibrium("v_des = " + std::to_string(v_des) + " not in (0, v0)");
    }
    const double h0 = inverse_optimal_velocity(p, v_des);
    const int Nc = p.Nc;
    const int N = 2 * Nc;
    const int M = 2;

    detail::CarFollowingRaw raw{p, v_des};
    std::vector<double> x0(static_cast<std::size_t>(N));
    for (int i = 0; i < Nc; ++i) {
        x0[static_cast<std::size_t>(i)] = h0;
        x0[static_cast<std::size_t>(Nc + i)] = v_des;
    }
    std::vector<double> y0{0.0, v_des};

    // Linearization at the equilibrium from a first-order lift in (x, y).
    const int nv = N + M;
    std::vector<TruncSeries> xs;
    std::vector<TruncSeries> ys;
    for (int i = 0; i < N; ++i) xs.push_back(TruncSeries::variable(nv, 1, i, x0[static_cast<std::size_t>(i)]));
    for (int j = 0; j < M; ++j) ys.push_back(TruncSeries::variable(nv, 1, N + j, y0[static_cast<std::size_t>(j)]));
    const auto Fs = raw.follower(xs, ys);
    const auto Gs = raw.leader(ys);
    DenseMatrix A(M, M);
    DenseMatrix B(N, N);
    DenseMatrix C(N, M);
    for (int n = 0; n < N; ++n) {
        for (int i = 0; i < N; ++i) B(n, i) = Fs[static_cast<std::size_t>(n)][static_cast<std::size_t>(1 + i)];
        for (int j = 0; j < M; ++j) C(n, j) = Fs[static_cast<std::size_t>(n)][static_cast<std::size_t>(1 + N + j)];
    }
    for (int m = 0; m < M; ++m) {
        for (int j = 0; j < M; ++j) A(m, j) = Gs[static_cast<std::size_t>(m)][static_cast<std::size_t>(1 + N + j)];
    }

    SystemModel s;
    s.label = "car_following";
    s.N = N;
    s.M = M;
    s.A = A;
    s.B = B;
    s.C = C;
    s.domain = Box{{-5.0, -5.0}, {5.0, 5.0}};
    s.x_offset = Eigen::Map<const Vector>(x0.data(), N);
    s.y_offset = Eigen::Map<const Vector>(y0.data(), M);
    s.set_circuit(detail::DeviationCircuit<detail::CarFollowingRaw>{raw, x0, y0, A, B, C, raw.follower(x0, y0), raw.leader(y0)});
    return s;
}

/// Raw (non-deviation) platoon step, used to validate the deviation model.
inline std::pair<Vector, Vector> car_following_raw_step(const CarFollowingParams& p, const Vector& xhat,
                                                        const Vector& yhat) {
    detail::CarFollowingRaw raw{p, p.desired_velocity()};
    std::vector<double> xs(xhat.data(), xhat.data() + xhat.size());
    std::vector<double> ys(yhat.data(), yhat.data() + yhat.size());
    auto xn = raw.follower(xs, ys);
    auto yn = raw.leader(ys);
    return {Eigen::Map<const Vector>(xn.data(), static_cast<Eigen::Index>(xn.size())),
            Eigen::Map<const Vector>(yn.data(), static_cast<Eigen::Index>(yn.size()))};
}

}  // namespace imhyb::systems
