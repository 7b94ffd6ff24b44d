#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "imhyb/errors.hpp"
#include "imhyb/numerics/dense.hpp"
#include "imhyb/numerics/series.hpp"

namespace imhyb {

using numerics::DenseMatrix;
using numerics::Index;
using numerics::MultiIndex;
using numerics::Vector;

enum class Family { Power, Legendre, Chebyshev2 };

inline const char* family_name(Family f) {
    switch (f) {
        case Family::Power: return "power";
        case Family::Legendre: return "legendre";
        case Family::Chebyshev2: return "chebyshev2";
    }
    return "?";
}

inline Family family_from_name(const std::string& s) {
    if (s == "power") return Family::Power;
    if (s == "legendre") return Family::Legendre;
    if (s == "chebyshev2") return Family::Chebyshev2;
    throw ConfigError("unknown polynomial family '" + s + "'");
}

/// Writes P_0(y) .. P_h(y) into out[0..h].
inline void basis_values(Family family, int h, double y, double* out) {
    out[0] = 1.0;
    if (h == 0) return;
    switch (family) {
        case Family::Power:
            for (int l = 1; l <= h; ++l) out[l] = out[l - 1] * y;
            break;
        case Family::Legendre:
            out[1] = y;
            for (int l = 1; l < h; ++l) {
                out[l + 1] = ((2.0 * l + 1.0) * y * out[l] - l * out[l - 1]) / (l + 1.0);
            }
            break;
        case Family::Chebyshev2:
            out[1] = 2.0 * y;
            for (int l = 1; l < h; ++l) out[l + 1] = 2.0 * y * out[l] - out[l - 1];
            break;
    }
}

/// Univariate basis polynomial of degree l.
inline double basis_eval(Family family, int l, double y) {
    if (l < 0) throw DimensionMismatch("basis degree must be non-negative");
    std::vector<double> v(static_cast<std::size_t>(l + 1));
    basis_values(family, l, y, v.data());
    return v[static_cast<std::size_t>(l)];
}

/// All multi-indices of total degree <= h over M variables, graded-lex.
struct MultiIndexBasis {
    int M = 0;
    int h = 0;
    std::vector<MultiIndex> indices;

    MultiIndexBasis() = default;
    MultiIndexBasis(int M_, int h_) : M(M_), h(h_), indices(numerics::graded_lex_indices(M_, h_)) {}

    [[nodiscard]] Index size() const { return static_cast<Index>(indices.size()); }
};

// ---------------------------------------------------------------------------

struct PolyParams {
    Family family = Family::Power;
    MultiIndexBasis basis;
    DenseMatrix a;  // N x basis.size()

    PolyParams() = default;
    PolyParams(Family f, int N, int M, int h) : family(f), basis(M, h), a(DenseMatrix::Zero(N, basis.size())) {}

    [[nodiscard]] int N() const { return static_cast<int>(a.rows()); }
    [[nodiscard]] int M() const { return basis.M; }
    [[nodiscard]] int h() const { return basis.h; }
    [[nodiscard]] Index size() const { return basis.size(); }

    /// prod_m P_{alpha_m}(y_m) for every alpha of the basis.
    void features(const Vector& y, double* out) const {
        const int hh = basis.h;
        std::vector<double> table(static_cast<std::size_t>(basis.M * (hh + 1)));
        for (int m = 0; m < basis.M; ++m) basis_values(family, hh, y(m), table.data() + m * (hh + 1));
        for (std::size_t k = 0; k < basis.indices.size(); ++k) {
            double v = 1.0;
            const MultiIndex& al = basis.indices[k];
            for (int m = 0; m < basis.M; ++m) v *= table[static_cast<std::size_t>(m * (hh + 1) + al[m])];
            out[k] = v;
        }
    }
    [[nodiscard]] Vector features(const Vector& y) const {
        Vector f(size());
        features(y, f.data());
        return f;
    }
};

inline Vector poly_eval(const PolyParams& poly, const Vector& y) { return poly.a * poly.features(y); }

/// d pi_n / d a_n^alpha; identical for every output n (cross-output entries vanish).
inline Vector poly_param_grad(const PolyParams& poly, const Vector& y) { return poly.features(y); }

// ---------------------------------------------------------------------------

inline double sigmoid(double t) {
    if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

/// One sigmoid hidden layer per output. Row n of p is
/// [w^o (L), b^o, W (L x M, row-major), b (L)].
struct NnParams {
    int L = 0;
    int M = 0;
    DenseMatrix p;  // N x (L (M + 2) + 1)

    NnParams() = default;
    NnParams(int N, int M_, int L_) : L(L_), M(M_), p(DenseMatrix::Zero(N, size_for(M_, L_))) {}

    static Index size_for(int M, int L) { return static_cast<Index>(L) * (M + 2) + 1; }

    [[nodiscard]] int N() const { return static_cast<int>(p.rows()); }
    [[nodiscard]] Index size() const { return size_for(M, L); }

    [[nodiscard]] Index wo(int l) const { return l; }
    [[nodiscard]] Index bo() const { return L; }
    [[nodiscard]] Index W(int l, int m) const { return L + 1 + static_cast<Index>(l) * M + m; }
    [[nodiscard]] Index b(int l) const { return L + 1 + static_cast<Index>(L) * M + l; }

    [[nodiscard]] double output(int n, const Vector& y) const {
        double s = p(n, bo());
        for (int l = 0; l < L; ++l) {
            double t = p(n, b(l));
            for (int m = 0; m < M; ++m) t += p(n, W(l, m)) * y(m);
            s += p(n, wo(l)) * sigmoid(t);
        }
        return s;
    }

    /// Value of output n and d(output n)/d p_n into grad[0..size()).
    double output_grad(int n, const Vector& y, double* grad) const {
        double s = p(n, bo());
        grad[bo()] = 1.0;
        for (int l = 0; l < L; ++l) {
            double t = p(n, b(l));
            for (int m = 0; m < M; ++m) t += p(n, W(l, m)) * y(m);
            const double phi = sigmoid(t);
            const double w = p(n, wo(l));
            s += w * phi;
            grad[wo(l)] = phi;
            const double dt = w * phi * (1.0 - phi);
            for (int m = 0; m < M; ++m) grad[W(l, m)] = dt * y(m);
            grad[b(l)] = dt;
        }
        return s;
    }
};

inline Vector nn_eval(const NnParams& nn, const Vector& y) {
    Vector out(nn.N());
    for (int n = 0; n < nn.N(); ++n) out(n) = nn.output(n, y);
    return out;
}

/// Row n: gradient of output n with respect to its own parameter block p_n.
inline DenseMatrix nn_param_grad(const NnParams& nn, const Vector& y) {
    DenseMatrix g(nn.N(), nn.size());
    Vector row(nn.size());
    for (int n = 0; n < nn.N(); ++n) {
        nn.output_grad(n, y, row.data());
        g.row(n) = row.transpose();
    }
    return g;
}

// ---------------------------------------------------------------------------

/// 1 iff |y_m| < r_m for every m; points on the box boundary belong to the NN side.
inline bool gate(const Vector& y, const Vector& r) {
    for (Index m = 0; m < y.size(); ++m) {
        if (!(std::abs(y(m)) < r(m))) return false;
    }
    return true;
}

struct HybridModel {
    PolyParams poly;
    NnParams nn;
    Vector r;

    void validate() const {
        if (poly.N() != nn.N() || poly.M() != nn.M) {
            throw DimensionMismatch("polynomial and network components disagree on N or M");
        }
        if (r.size() != poly.M()) throw DimensionMismatch("gate radius has wrong length");
        for (Index m = 0; m < r.size(); ++m) {
            if (!(r(m) > 0.0)) throw ConfigError("gate radius components must be positive");
            if (poly.family != Family::Power && r(m) > 1.0) {
                throw ConfigError(std::string(family_name(poly.family)) + " basis requires r_m <= 1");
            }
        }
    }
};

inline Vector hybrid_eval(const HybridModel& hm, const Vector& y) {
    return gate(y, hm.r) ? poly_eval(hm.poly, y) : nn_eval(hm.nn, y);
}

/// Row n over the block [a_n, p_n]; the inactive component's columns are 0.
inline DenseMatrix hybrid_param_grad(const HybridModel& hm, const Vector& y) {
    const Index K = hm.poly.size();
    DenseMatrix g = DenseMatrix::Zero(hm.poly.N(), K + hm.nn.size());
    if (gate(y, hm.r)) {
        const Vector f = poly_param_grad(hm.poly, y);
        for (int n = 0; n < hm.poly.N(); ++n) g.row(n).head(K) = f.transpose();
    } else {
        g.rightCols(hm.nn.size()) = nn_param_grad(hm.nn, y);
    }
    return g;
}

// ---------------------------------------------------------------------------

enum class SchemeKind { Poly, NN, Hybrid };

inline const char* scheme_name(SchemeKind k) {
    switch (k) {
        case SchemeKind::Poly: return "poly";
        case SchemeKind::NN: return "nn";
        case SchemeKind::Hybrid: return "hybrid";
    }
    return "?";
}

/// Any of the three parameterizations behind one interface. Parameters of
/// output n occupy the contiguous block [n * block_size(), (n + 1) * block_size())
/// of the flat vector nu = [a_1, p_1, ..., a_N, p_N].
class Approximator {
public:
    Approximator() = default;
    explicit Approximator(PolyParams poly) : m_(std::move(poly)) {}
    explicit Approximator(NnParams nn) : m_(std::move(nn)) {}
    explicit Approximator(HybridModel hm) : m_(std::move(hm)) {}

    [[nodiscard]] SchemeKind kind() const {
        if (std::holds_alternative<PolyParams>(m_)) return SchemeKind::Poly;
        if (std::holds_alternative<NnParams>(m_)) return SchemeKind::NN;
        return SchemeKind::Hybrid;
    }

    [[nodiscard]] const PolyParams* poly() const {
        if (const auto* p = std::get_if<PolyParams>(&m_)) return p;
        if (const auto* h = std::get_if<HybridModel>(&m_)) return &h->poly;
        return nullptr;
    }
    PolyParams* poly() { return const_cast<PolyParams*>(std::as_const(*this).poly()); }
    [[nodiscard]] const NnParams* nn() const {
        if (const auto* p = std::get_if<NnParams>(&m_)) return p;
        if (const auto* h = std::get_if<HybridModel>(&m_)) return &h->nn;
        return nullptr;
    }
    NnParams* nn() { return const_cast<NnParams*>(std::as_const(*this).nn()); }
    [[nodiscard]] const HybridModel* hybrid() const { return std::get_if<HybridModel>(&m_); }

    [[nodiscard]] int N() const { return poly() ? poly()->N() : nn()->N(); }
    [[nodiscard]] int M() const { return poly() ? poly()->M() : nn()->M; }
    [[nodiscard]] Index poly_size() const { return poly() ? poly()->size() : 0; }
    [[nodiscard]] Index nn_size() const { return nn() ? nn()->size() : 0; }
    [[nodiscard]] Index block_size() const { return poly_size() + nn_size(); }
    [[nodiscard]] Index num_params() const { return block_size() * N(); }

    [[nodiscard]] Vector pack() const {
        const Index K = poly_size();
        const Index P = nn_size();
        Vector nu(num_params());
        for (int n = 0; n < N(); ++n) {
            if (K) nu.segment(n * (K + P), K) = poly()->a.row(n).transpose();
            if (P) nu.segment(n * (K + P) + K, P) = nn()->p.row(n).transpose();
        }
        return nu;
    }

    void unpack(const Vector& nu) {
        if (nu.size() != num_params()) {
            throw DimensionMismatch("parameter vector length " + std::to_string(nu.size()) + " != " +
                                    std::to_string(num_params()));
        }
        const Index K = poly_size();
        const Index P = nn_size();
        for (int n = 0; n < N(); ++n) {
            if (K) poly()->a.row(n) = nu.segment(n * (K + P), K).transpose();
            if (P) nn()->p.row(n) = nu.segment(n * (K + P) + K, P).transpose();
        }
    }

    [[nodiscard]] bool interior(const Vector& y) const {
        const HybridModel* h = hybrid();
        return h ? gate(y, h->r) : kind() == SchemeKind::Poly;
    }

    [[nodiscard]] Vector eval(const Vector& y) const {
        if (interior(y)) return poly_eval(*poly(), y);
        return nn_eval(*nn(), y);
    }

    /// Values into val (N) and, row n, d pi_n / d(block n) into grad (N x block_size).
    void eval_grad(const Vector& y, Vector& val, DenseMatrix& grad) const {
        const Index K = poly_size();
        const int n_out = N();
        val.resize(n_out);
        grad.setZero(n_out, block_size());
        if (interior(y)) {
            Vector f(K);
            poly()->features(y, f.data());
            val.noalias() = poly()->a * f;
            for (int n = 0; n < n_out; ++n) grad.row(n).head(K) = f.transpose();
        } else {
            const NnParams& net = *nn();
            Vector row(net.size());
            for (int n = 0; n < n_out; ++n) {
                val(n) = net.output_grad(n, y, row.data());
                grad.row(n).tail(net.size()) = row.transpose();
            }
        }
    }

    /// pi^xS(y) - pi^NN(y) and its block gradients; hybrid only.
    void mismatch_grad(const Vector& y, Vector& val, DenseMatrix& grad) const {
        const Index K = poly_size();
        const NnParams& net = *nn();
        const int n_out = N();
        Vector f(K);
        poly()->features(y, f.data());
        val.noalias() = poly()->a * f;
        grad.resize(n_out, block_size());
        Vector row(net.size());
        for (int n = 0; n < n_out; ++n) {
            val(n) -= net.output_grad(n, y, row.data());
            grad.row(n).head(K) = f.transpose();
            grad.row(n).tail(net.size()) = -row.transpose();
        }
    }

private:
    std::variant<PolyParams, NnParams, HybridModel> m_;
};

}  // namespace imhyb
