#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace imhyb;
using namespace imhyb::testing;
using training::NfeProblem;
using training::SchemeSpec;

namespace {

const Family kFamilies[] = {Family::Power, Family::Legendre, Family::Chebyshev2};

void randomize(Approximator& m, CounterRng& rng, double scale = 1.0) {
    m.unpack(random_vector(rng, m.num_params(), -scale, scale));
}

double max_reconstruction_error(const PolyParams& p) {
    double e = 0.0;
    for (int i = 0; i <= 1800; ++i) {
        const double y = -0.9 + 0.001 * i;
        e = std::max(e, std::abs(poly_eval(p, vec({y}))(0) - std::log1p(y)));
    }
    return e;
}

}  // namespace

// ---------------------------------------------------------------- bases

TEST(Basis, Examples) {
    EXPECT_DOUBLE_EQ(basis_eval(Family::Legendre, 2, 0.5), -0.125);
    EXPECT_DOUBLE_EQ(basis_eval(Family::Chebyshev2, 1, 1.0), 2.0);
    EXPECT_DOUBLE_EQ(basis_eval(Family::Power, 3, 2.0), 8.0);
    for (int l = 0; l <= 20; ++l) EXPECT_NEAR(basis_eval(Family::Legendre, l, 1.0), 1.0, 1e-13);
    for (auto f : kFamilies) EXPECT_EQ(basis_eval(f, 0, 0.37), 1.0);
}

TEST(Basis, LegendreOrthogonality) {
    const auto [x, w] = gauss_legendre(64);
    for (int i = 0; i <= 6; ++i)
        for (int j = 0; j < i; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < x.size(); ++k)
                s += w[k] * basis_eval(Family::Legendre, i, x[k]) * basis_eval(Family::Legendre, j, x[k]);
            EXPECT_LT(std::abs(s), 1e-10) << i << "," << j;
        }
}

TEST(Basis, ChebyshevSecondKindOrthogonality) {
    // Weight sqrt(1 - y^2), integrated in theta with y = cos(theta).
    const auto [x, w] = gauss_legendre(64);
    for (int i = 0; i <= 6; ++i)
        for (int j = 0; j < i; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < x.size(); ++k) {
                const double th = 0.5 * std::numbers::pi * (x[k] + 1.0);
                const double y = std::cos(th);
                s += w[k] * basis_eval(Family::Chebyshev2, i, y) * basis_eval(Family::Chebyshev2, j, y) *
                     std::sin(th) * std::sin(th);
            }
            EXPECT_LT(std::abs(0.5 * std::numbers::pi * s), 1e-10) << i << "," << j;
        }
}

TEST(Basis, MultiIndexCount) {
    for (int M = 1; M <= 3; ++M)
        for (int h = 0; h <= 5; ++h) {
            const MultiIndexBasis b(M, h);
            EXPECT_EQ(static_cast<std::size_t>(b.size()),
                      numerics::binomial(static_cast<std::size_t>(M + h), static_cast<std::size_t>(h)));
            for (const auto& a : b.indices) EXPECT_LE(numerics::total_degree(a), h);
        }
}

// ---------------------------------------------------------------- evaluation

TEST(Poly, Examples) {
    PolyParams zero(Family::Legendre, 2, 2, 3);
    EXPECT_EQ(poly_eval(zero, vec({0.3, -0.2})).norm(), 0.0);

    const int h = 8;
    PolyParams ln = univariate_series(Family::Power, ln_power_coeffs(h));
    double trunc = 0.0;
    for (int i = 1; i <= h; ++i) trunc += ((i % 2) ? 1.0 : -1.0) * std::pow(0.5, i) / i;
    EXPECT_NEAR(poly_eval(ln, vec({0.5}))(0), trunc, 1e-15);

    PolyParams p(Family::Power, 1, 2, 1);
    p.a << 0, 1, 2;
    EXPECT_DOUBLE_EQ(poly_eval(p, vec({3, 4}))(0), 11.0);
}

TEST(Poly, PowerFamilyMatchesHorner) {
    CounterRng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        const int h = 1 + static_cast<int>(rng.below(12));
        const Vector a = random_vector(rng, h + 1, -1, 1);
        const double y = rng.uniform(-1.5, 1.5);
        double horner = 0.0;
        for (int i = h; i >= 0; --i) horner = horner * y + a(i);
        EXPECT_NEAR(poly_eval(univariate_series(Family::Power, a), vec({y}))(0), horner, 1e-13);
    }
}

TEST(Nn, ParameterCountAndExamples) {
    for (int M = 1; M <= 3; ++M)
        for (int L = 1; L <= 5; ++L) EXPECT_EQ(NnParams(2, M, L).size(), L * (M + 2) + 1);

    NnParams z(1, 2, 3);
    EXPECT_EQ(nn_eval(z, vec({1.0, -2.0}))(0), 0.0);

    NnParams one(1, 1, 1);
    one.p(0, one.wo(0)) = 1.0;
    EXPECT_DOUBLE_EQ(nn_eval(one, vec({0.0}))(0), 0.5);

    NnParams c(1, 1, 1);
    c.p(0, c.wo(0)) = 2.0;
    c.p(0, c.bo()) = -1.0;
    for (double y : {-3.0, 0.0, 7.0}) EXPECT_DOUBLE_EQ(nn_eval(c, vec({y}))(0), 0.0);

    EXPECT_NEAR(sigmoid(800.0), 1.0, 0.0);
    EXPECT_EQ(sigmoid(-800.0), 0.0);
}

TEST(Nn, GradientExamples) {
    NnParams z(1, 2, 3);
    const DenseMatrix g = nn_param_grad(z, vec({0.0, 0.0}));
    EXPECT_EQ(g(0, z.bo()), 1.0);
    for (int l = 0; l < 3; ++l) {
        EXPECT_EQ(g(0, z.wo(l)), 0.5);
        EXPECT_EQ(g(0, z.b(l)), 0.0);
    }
}

TEST(Gate, Examples) {
    EXPECT_TRUE(gate(vec({0.3}), vec({0.5})));
    EXPECT_FALSE(gate(vec({0.5}), vec({0.5})));
    EXPECT_FALSE(gate(vec({-0.5}), vec({0.5})));
    EXPECT_FALSE(gate(vec({0.1, 0.9}), vec({1.0, 0.5})));
}

TEST(Hybrid, SelectsExactlyOneComponent) {
    CounterRng rng(9);
    HybridModel hm{PolyParams(Family::Power, 2, 2, 3), NnParams(2, 2, 4), vec({0.5, 0.5})};
    Approximator m(hm);
    randomize(m, rng);
    const HybridModel& h = *m.hybrid();
    for (int t = 0; t < 200; ++t) {
        const Vector y = random_vector(rng, 2, -1, 1);
        const Vector v = hybrid_eval(h, y);
        const Vector expect = gate(y, h.r) ? poly_eval(h.poly, y) : nn_eval(h.nn, y);
        EXPECT_EQ((v - expect).norm(), 0.0);
    }
    const Vector on_boundary = vec({0.5, 0.1});
    EXPECT_EQ((hybrid_eval(h, on_boundary) - nn_eval(h.nn, on_boundary)).norm(), 0.0);
}

TEST(Hybrid, GradientBlocksAreComplementary) {
    CounterRng rng(10);
    HybridModel hm{PolyParams(Family::Legendre, 1, 2, 2), NnParams(1, 2, 3), vec({1.0, 1.0})};
    Approximator m(hm);
    randomize(m, rng);
    const Index K = m.hybrid()->poly.size();
    const DenseMatrix gin = hybrid_param_grad(*m.hybrid(), vec({0.2, -0.3}));
    EXPECT_EQ(gin.rightCols(gin.cols() - K).norm(), 0.0);
    EXPECT_GT(gin.leftCols(K).norm(), 0.0);
    const DenseMatrix gout = hybrid_param_grad(*m.hybrid(), vec({1.5, -0.3}));
    EXPECT_EQ(gout.leftCols(K).norm(), 0.0);
    EXPECT_GT(gout.rightCols(gout.cols() - K).norm(), 0.0);
}

TEST(Hybrid, OrthogonalFamiliesRequireUnitRadius) {
    SchemeSpec s;
    s.kind = SchemeKind::Hybrid;
    s.h = 3;
    s.L = 2;
    s.r = vec({1.5});
    s.family = Family::Legendre;
    EXPECT_THROW(training::make_approximator(s, 1, 1), ConfigError);
    s.family = Family::Chebyshev2;
    EXPECT_THROW(training::make_approximator(s, 1, 1), ConfigError);
    s.family = Family::Power;
    EXPECT_NO_THROW(training::make_approximator(s, 1, 1));
}

TEST(ParamGrad, Examples) {
    PolyParams p(Family::Power, 1, 1, 3);
    const Vector g = poly_param_grad(p, vec({3.0}));
    EXPECT_EQ(g(0), 1.0);
    EXPECT_EQ(g(2), 9.0);

    PolyParams q(Family::Legendre, 1, 2, 2);
    const Vector gq = poly_param_grad(q, vec({0.5, 0.5}));
    const auto& idx = q.basis.indices;
    for (Index k = 0; k < q.size(); ++k) {
        if (idx[static_cast<std::size_t>(k)] == MultiIndex{1, 1}) EXPECT_DOUBLE_EQ(gq(k), 0.25);
    }
}

TEST(ParamGrad, MatchesFiniteDifferences) {
    // 100 random (params, y) draws per family and scheme.
    CounterRng rng(12);
    for (auto fam : kFamilies) {
        for (auto kind : {SchemeKind::Poly, SchemeKind::NN, SchemeKind::Hybrid}) {
            SchemeSpec s;
            s.kind = kind;
            s.family = fam;
            s.h = 3;
            s.L = 3;
            s.r = vec({0.6, 0.6});
            Approximator m = training::make_approximator(s, 2, 2);
            double worst = 0.0;
            for (int t = 0; t < 100; ++t) {
                randomize(m, rng);
                Vector y = random_vector(rng, 2, -1, 1);
                if (kind == SchemeKind::Hybrid && std::abs(std::abs(y(0)) - 0.6) < 1e-3) y(0) += 0.01;
                Vector val;
                DenseMatrix grad;
                m.eval_grad(y, val, grad);
                const Vector nu = m.pack();
                const Index bs = m.block_size();
                for (Index c = 0; c < nu.size(); ++c) {
                    Vector p = nu;
                    Vector q = nu;
                    p(c) += 1e-6;
                    q(c) -= 1e-6;
                    Approximator mp = m;
                    Approximator mq = m;
                    mp.unpack(p);
                    mq.unpack(q);
                    const Vector fd = (mp.eval(y) - mq.eval(y)) / 2e-6;
                    const Index n = c / bs;
                    for (Index o = 0; o < 2; ++o) {
                        const double an = o == n ? grad(o, c % bs) : 0.0;
                        worst = std::max(worst, std::abs(fd(o) - an) / std::max(1.0, std::abs(an)));
                    }
                }
            }
            EXPECT_LT(worst, 1e-6) << scheme_name(kind) << "/" << family_name(fam);
        }
    }
}

// ---------------------------------------------------------------- residuals and Jacobians

namespace {

sampling::CollocationSet small_collocation(int M, int Q, const Vector* r, CounterRng& rng) {
    sampling::CollocationSet cs;
    cs.interior = DenseMatrix(Q, M);
    for (int q = 0; q < Q; ++q)
        for (int m = 0; m < M; ++m) cs.interior(q, m) = rng.uniform(-1.2, 1.2);
    if (r) cs.boundary = sampling::boundary_points(*r);
    else cs.boundary = DenseMatrix(0, M);
    return cs;
}

double max_column_deviation(const NfeProblem& prob, const Vector& nu) {
    const DenseMatrix J = prob.jacobian(nu);
    double worst = 0.0;
    for (Index c = 0; c < nu.size(); ++c) {
        Vector p = nu;
        Vector q = nu;
        const double hs = 1e-6 * std::max(1.0, std::abs(nu(c)));
        p(c) += hs;
        q(c) -= hs;
        const Vector fd = (prob.residuals(p) - prob.residuals(q)) / (2 * hs);
        worst = std::max(worst, (fd - J.col(c)).norm() / std::max(1.0, J.col(c).norm()));
    }
    return worst;
}

}  // namespace

TEST(Jacobian, MatchesFiniteDifferencesAllSchemes) {
    CounterRng rng(13);
    int probes = 0;
    for (int N = 1; N <= 2; ++N)
        for (int M = 1; M <= 2; ++M) {
            const auto sys = toy_system(N, M);
            for (auto fam : kFamilies)
                for (auto kind : {SchemeKind::Poly, SchemeKind::NN, SchemeKind::Hybrid}) {
                    SchemeSpec s;
                    s.kind = kind;
                    s.family = fam;
                    s.h = 3;
                    s.L = 4;
                    s.r = Vector::Constant(M, 0.7);
                    const Vector r = s.r;
                    const auto cs = small_collocation(M, 10, kind == SchemeKind::Hybrid ? &r : nullptr, rng);
                    Approximator shape = training::make_approximator(s, N, M);
                    NfeProblem prob(sys, cs, shape, {1.0, 0.7, 1.3});
                    const Vector nu = random_vector(rng, prob.cols(), -0.5, 0.5);
                    EXPECT_LT(max_column_deviation(prob, nu), 1e-6)
                        << scheme_name(kind) << "/" << family_name(fam) << " N=" << N << " M=" << M;
                    probes += static_cast<int>(prob.cols());
                }
        }
    EXPECT_GE(probes, 100);
}

TEST(Jacobian, BioreactorAndCarFollowing) {
    CounterRng rng(14);
    systems::CarFollowingParams cf;
    cf.Nc = 1;
    for (const auto& sys : {systems::bioreactor(), systems::car_following(cf)}) {
        SchemeSpec s;
        s.kind = SchemeKind::Hybrid;
        s.h = 2;
        s.L = 3;
        s.r = Vector::Constant(sys.M, 1.0);
        const Vector r = s.r;
        auto cs = small_collocation(sys.M, 8, &r, rng);
        cs.interior = cs.interior.cwiseAbs() * 2.0;
        NfeProblem prob(sys, cs, training::make_approximator(s, sys.N, sys.M), {});
        const Vector nu = random_vector(rng, prob.cols(), -0.3, 0.3);
        EXPECT_LT(max_column_deviation(prob, nu), 1e-6) << sys.label;
    }
}

TEST(Residuals, ExactMapGivesZeroInteriorResidual) {
    // Power series of ln(1+y) at high degree is exact to rounding well inside (-1, 1).
    const auto sys = systems::ln_example(-0.4);
    sampling::CollocationSet cs;
    cs.interior = DenseMatrix(5, 1);
    cs.interior << -0.2, -0.1, 0.0, 0.05, 0.1;
    cs.boundary = DenseMatrix(0, 1);
    Approximator exact(univariate_series(Family::Power, ln_power_coeffs(40)));
    NfeProblem prob(sys, cs, exact, {});
    const Vector F = prob.residuals(exact.pack());
    EXPECT_LT(F.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Residuals, ZeroManifoldForDecoupledSystem) {
    const auto sys = linear_system(DenseMatrix::Constant(1, 1, 0.5), DenseMatrix::Constant(1, 1, 0.3),
                                   DenseMatrix::Zero(1, 1));
    CounterRng rng(1);
    SchemeSpec s;
    s.kind = SchemeKind::Hybrid;
    s.h = 2;
    s.L = 2;
    s.r = vec({0.5});
    const Vector r = s.r;
    const auto cs = small_collocation(1, 6, &r, rng);
    NfeProblem prob(sys, cs, training::make_approximator(s, 1, 1), {});
    EXPECT_EQ(prob.residuals(Vector::Zero(prob.cols())).norm(), 0.0);
    EXPECT_EQ(prob.rows(), 1 * (6 + 1 + 2));
}

TEST(Residuals, StackingOrder) {
    // Perturbing one boundary point changes only boundary rows.
    CounterRng rng(15);
    const auto sys = toy_system(2, 2);
    SchemeSpec s;
    s.kind = SchemeKind::Hybrid;
    s.h = 2;
    s.L = 3;
    s.r = vec({0.7, 0.7});
    const Vector r = s.r;
    auto cs = small_collocation(2, 7, &r, rng);
    const Approximator shape = training::make_approximator(s, 2, 2);
    const NfeProblem a(sys, cs, shape, {});
    cs.boundary(3, 1) += 0.05;
    const NfeProblem b(sys, cs, shape, {});
    const Vector nu = random_vector(rng, a.cols(), -0.5, 0.5);
    const Vector d = a.residuals(nu) - b.residuals(nu);
    const Index R = a.num_boundary();
    EXPECT_EQ(a.rows(), 2 * (7 + 1 + R));
    for (Index i = 0; i < d.size(); ++i) {
        const bool changed = d(i) != 0.0;
        const bool is_b3 = i == a.boundary_row(0, 3) || i == a.boundary_row(1, 3);
        EXPECT_EQ(changed, is_b3) << "row " << i;
    }
}

TEST(Residuals, ExteriorPolyColumnOnlyInEquilibriumRows) {
    const auto sys = toy_system(1, 1);
    SchemeSpec s;
    s.kind = SchemeKind::Hybrid;
    s.h = 2;
    s.L = 2;
    s.r = vec({0.1});
    sampling::CollocationSet cs;
    cs.interior = DenseMatrix(3, 1);
    cs.interior << 1.5, 1.8, -1.9;
    cs.boundary = DenseMatrix(0, 1);
    NfeProblem prob(sys, cs, training::make_approximator(s, 1, 1), {1.0, 2.0, 1.0});
    CounterRng rng(3);
    const DenseMatrix J = prob.jacobian(random_vector(rng, prob.cols(), -0.5, 0.5));
    for (Index c = 0; c < 3; ++c) {
        for (Index row = 0; row < J.rows(); ++row) {
            if (row == prob.equilibrium_row(0)) continue;
            EXPECT_EQ(J(row, c), 0.0);
        }
    }
    EXPECT_EQ(J(prob.equilibrium_row(0), 0), 2.0);
}

TEST(Residuals, NnOutputBiasColumnAtEquilibrium) {
    const auto sys = toy_system(1, 2);
    SchemeSpec s;
    s.kind = SchemeKind::NN;
    s.L = 3;
    CounterRng rng(4);
    const auto cs = small_collocation(2, 5, nullptr, rng);
    NfeProblem prob(sys, cs, training::make_approximator(s, 1, 2), {1.0, 0.37, 5.0});
    EXPECT_EQ(prob.weights().boundary, 0.0);
    const DenseMatrix J = prob.jacobian(random_vector(rng, prob.cols(), -1, 1));
    EXPECT_DOUBLE_EQ(J(prob.equilibrium_row(0), prob.shape().nn()->bo()), 0.37);
}

TEST(Residuals, HybridWithoutPolyDegeneratesToNn) {
    // A gate radius so small that no point is interior, and no boundary weight.
    CounterRng rng(16);
    const auto sys = toy_system(2, 1);
    sampling::CollocationSet cs = small_collocation(1, 9, nullptr, rng);
    for (Index q = 0; q < cs.interior.rows(); ++q)
        if (std::abs(cs.interior(q, 0)) < 0.1) cs.interior(q, 0) = 0.5;
    SchemeSpec nn;
    nn.kind = SchemeKind::NN;
    nn.L = 3;
    NfeProblem pn(sys, cs, training::make_approximator(nn, 2, 1), {1.0, 1.0, 0.0});
    const Vector p = random_vector(rng, pn.cols(), -1, 1);

    SchemeSpec hy = nn;
    hy.kind = SchemeKind::Hybrid;
    hy.h = 0;
    hy.r = vec({1e-300});
    NfeProblem ph(sys, cs, training::make_approximator(hy, 2, 1), {1.0, 1.0, 0.0});
    // Hybrid layout per output: [a_n (1 coefficient), p_n]; the constant term is
    // only seen by the equilibrium row, which the NN scheme evaluates on the net.
    Vector nu(ph.cols());
    const Index bs = pn.block_size();
    for (Index n = 0; n < 2; ++n) {
        nu(n * (bs + 1)) = 0.0;
        nu.segment(n * (bs + 1) + 1, bs) = p.segment(n * bs, bs);
    }
    const Vector Fn = pn.residuals(p);
    const Vector Fh = ph.residuals(nu);
    const Index Q = cs.interior.rows();
    EXPECT_EQ((Fn.head(2 * Q) - Fh.head(2 * Q)).norm(), 0.0);
}

// ---------------------------------------------------------------- init and weights

TEST(Init, ParsimonousBounds) {
    sampling::CollocationSet cs;
    cs.interior = DenseMatrix(5, 1);
    cs.interior << 0.0, 1.0, 2.5, 4.0, 3.0;
    cs.boundary = DenseMatrix(0, 1);
    SchemeSpec s;
    s.kind = SchemeKind::Poly;
    s.h = 3;
    const auto shape = training::make_approximator(s, 1, 1);
    double max2 = 0.0;
    double max0 = 0.0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const Vector nu = training::init_params(shape, cs, seed);
        EXPECT_EQ(nu(0), 0.0);
        EXPECT_LE(std::abs(nu(2)), 1.0 / 16.0);
        EXPECT_LE(std::abs(nu(3)), 1.0 / 64.0);
        max2 = std::max(max2, std::abs(nu(2)));
        max0 = std::max(max0, std::abs(nu(1)));
    }
    EXPECT_GT(max2, 0.8 / 16.0);
    EXPECT_GT(max0, 0.8 / 4.0);

    const Vector naive = training::init_params(shape, cs, 3, training::InitKind::Naive);
    EXPECT_NE(naive(0), 0.0);
    EXPECT_EQ(training::init_params(shape, cs, 7), training::init_params(shape, cs, 7));
}

TEST(Init, DegenerateNormalizer) {
    sampling::CollocationSet cs;
    cs.interior = DenseMatrix::Zero(4, 1);
    cs.boundary = DenseMatrix(0, 1);
    SchemeSpec s;
    s.kind = SchemeKind::Poly;
    s.h = 2;
    EXPECT_THROW(training::init_params(training::make_approximator(s, 1, 1), cs, 0), DegenerateNormalizer);
}

TEST(Weights, BalanceRules) {
    CounterRng rng(17);
    const auto sys = toy_system(1, 1);
    SchemeSpec nn;
    nn.kind = SchemeKind::NN;
    nn.L = 2;
    const auto cs = small_collocation(1, 6, nullptr, rng);
    NfeProblem pn(sys, cs, training::make_approximator(nn, 1, 1), {});
    const Vector p = training::init_params(pn.shape(), cs, 1);
    const auto w = training::balance_weights(pn, p);
    EXPECT_EQ(w.interior, 1.0);
    EXPECT_EQ(w.boundary, 0.0);
    const auto rms = pn.group_rms(p);
    EXPECT_NEAR(w.equilibrium, std::clamp(rms[0] / rms[1], 1e-2, 1e4), 1e-14);

    // Zero residuals everywhere: all weights stay 1 except the absent boundary group.
    const auto lin = linear_system(DenseMatrix::Constant(1, 1, 0.5), DenseMatrix::Constant(1, 1, 0.2),
                                   DenseMatrix::Zero(1, 1));
    SchemeSpec hy;
    hy.kind = SchemeKind::Hybrid;
    hy.h = 1;
    hy.L = 1;
    hy.r = vec({0.5});
    const Vector r = hy.r;
    const auto cs2 = small_collocation(1, 4, &r, rng);
    NfeProblem ph(lin, cs2, training::make_approximator(hy, 1, 1), {});
    const auto w2 = training::balance_weights(ph, Vector::Zero(ph.cols()));
    EXPECT_EQ(w2.equilibrium, 1.0);
    EXPECT_EQ(w2.boundary, 1.0);
}

// ---------------------------------------------------------------- LM

namespace {

struct Linear {
    DenseMatrix V;
    Vector y;
    [[nodiscard]] Vector residuals(const Vector& c) const { return V * c - y; }
    [[nodiscard]] DenseMatrix jacobian(const Vector&) const { return V; }
};

struct Rosenbrock {
    [[nodiscard]] Vector residuals(const Vector& c) const { return vec({10 * (c(1) - c(0) * c(0)), 1 - c(0)}); }
    [[nodiscard]] DenseMatrix jacobian(const Vector& c) const {
        DenseMatrix J(2, 2);
        J << -20 * c(0), 10, -1, 0;
        return J;
    }
};

}  // namespace

TEST(Lm, LinearProblemMatchesPinv) {
    CounterRng rng(18);
    Linear prob{DenseMatrix(30, 4), Vector()};
    for (Index i = 0; i < 30; ++i) {
        const double x = rng.uniform(-1, 1);
        for (Index j = 0; j < 4; ++j) prob.V(i, j) = std::pow(x, static_cast<double>(j));
    }
    prob.y = random_vector(rng, 30, -1, 1);
    const Vector ref = numerics::pinv_solve(prob.V, prob.y);
    LmConfig cfg;
    cfg.tol_F = 1e-15;
    cfg.tol_R = 1e-15;
    const auto res = lm_minimize(prob, Vector::Zero(4), cfg, true);
    EXPECT_LT((res.params - ref).norm(), 1e-8);
    double last = std::numeric_limits<double>::infinity();
    for (const auto& t : res.trace) {
        if (!t.accepted) continue;
        EXPECT_LT(t.loss, last);
        last = t.loss;
    }
}

TEST(Lm, ZeroResidualStopsImmediately) {
    Linear prob{DenseMatrix::Identity(2, 2), vec({0, 0})};
    const auto res = lm_minimize(prob, Vector::Zero(2), LmConfig{});
    EXPECT_EQ(res.iterations, 1);
    EXPECT_EQ(res.stop, StopReason::FunctionTol);
    EXPECT_EQ(res.final_loss, 0.0);
}

TEST(Lm, RosenbrockAndTrace) {
    const auto res = lm_minimize(Rosenbrock{}, vec({-1.2, 1.0}), LmConfig{}, true);
    EXPECT_NEAR(res.params(0), 1.0, 1e-3);
    EXPECT_NE(res.stop, StopReason::MaxIter);
    EXPECT_EQ(static_cast<int>(res.trace.size()), res.iterations);
    bool any_rejected = false;
    for (std::size_t i = 1; i < res.trace.size(); ++i) {
        const auto& prev = res.trace[i - 1];
        const double expect = prev.accepted ? prev.lambda / 10 : prev.lambda * 10;
        EXPECT_DOUBLE_EQ(res.trace[i].lambda, expect);
        any_rejected = any_rejected || !prev.accepted;
    }
    (void)any_rejected;
}

TEST(Lm, ConfigValidation) {
    LmConfig bad;
    bad.k_max = 0;
    EXPECT_THROW(bad.validate(), ConfigError);
    LmConfig neg;
    neg.tol_F = -1;
    EXPECT_THROW(neg.validate(), ConfigError);
}

TEST(Lm, RespectsIterationBudget) {
    LmConfig cfg;
    cfg.k_max = 3;
    cfg.tol_F = 1e-300;
    cfg.tol_R = 1e-300;
    const auto res = lm_minimize(Rosenbrock{}, vec({-1.2, 1.0}), cfg);
    EXPECT_EQ(res.iterations, 3);
    EXPECT_EQ(res.stop, StopReason::MaxIter);
}

// ---------------------------------------------------------------- training

TEST(Training, EnsembleIsDeterministic) {
    const auto sys = systems::ln_example(-0.4);
    SchemeSpec s;
    s.kind = SchemeKind::NN;
    s.L = 3;
    const auto plan = sampling::generic_plan(sys);
    training::CollocationFactory fac = [&](std::uint64_t seed) {
        return sampling::make_collocation(sys, 100, nullptr, plan, seed);
    };
    LmConfig cfg;
    cfg.k_max = 40;
    const auto a = training::train_ensemble(s, sys, fac, 3, cfg, 5, 1);
    const auto b = training::train_ensemble(s, sys, fac, 3, cfg, 5, 3);
    ASSERT_EQ(a.size(), 3u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_TRUE(a[i].report.ok());
        EXPECT_EQ(a[i].report.final_loss, b[i].report.final_loss);
        EXPECT_EQ(a[i].model.pack(), b[i].model.pack());
    }
    EXPECT_NE(a[0].report.final_loss, a[1].report.final_loss);
    EXPECT_THROW(training::train_ensemble(s, sys, fac, 0, cfg, 5, 1), ConfigError);

    const auto one = training::train_ensemble(s, sys, fac, 1, cfg, 5, 1);
    const auto seeds = training::realization_seeds(5, 0);
    const auto direct = training::train_once(s, sys, fac(seeds.collocation), cfg, seeds.init);
    EXPECT_EQ(one[0].report.final_loss, direct.report.final_loss);
}

TEST(Training, FailuresAreRecordedNotThrown) {
    const auto sys = systems::ln_example(-0.4);
    SchemeSpec s;
    s.kind = SchemeKind::Poly;
    s.h = 2;
    training::CollocationFactory fac = [&](std::uint64_t) {
        sampling::CollocationSet cs;
        cs.interior = DenseMatrix::Zero(5, 1);
        cs.boundary = DenseMatrix(0, 1);
        return cs;
    };
    const auto out = training::train_ensemble(s, sys, fac, 2, LmConfig{}, 1, 1);
    for (const auto& o : out) {
        EXPECT_FALSE(o.report.ok());
        EXPECT_NE(o.report.error.find("DegenerateNormalizer"), std::string::npos);
    }
}

TEST(Training, LnNetworkReachesLowLoss) {
    // Most seeded runs of the L = 10 network on the ln example go below 1e-5.
    const auto sys = systems::ln_example(-0.4);
    SchemeSpec s;
    s.kind = SchemeKind::NN;
    s.L = 10;
    const auto plan = sampling::generic_plan(sys);
    training::CollocationFactory fac = [&](std::uint64_t seed) {
        return sampling::make_collocation(sys, sampling::collocation_count(1, 1, 10), nullptr, plan, seed);
    };
    const auto out = training::train_ensemble(s, sys, fac, 20, LmConfig{}, 3);
    int good = 0;
    for (const auto& o : out) good += o.report.ok() && o.report.final_loss < 1e-5;
    EXPECT_GE(good, 18);
}

// ---------------------------------------------------------------- PSE

TEST(Pse, LnCoefficients) {
    const auto sol = pse_solve(systems::ln_example(-0.4), 10);
    const Vector ref = ln_power_coeffs(10);
    EXPECT_EQ(sol.coeffs(0, 0), 0.0);
    EXPECT_LT((sol.coeffs.row(0).transpose() - ref).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Pse, BioreactorFirstOrder) {
    const auto sys = systems::bioreactor();
    const auto sol = pse_solve(sys, 4);
    const double expect = sys.C(0, 0) / (sys.A(0, 0) - sys.B(0, 0));
    EXPECT_NEAR(sol.coeffs(0, 1), expect, 1e-14);
    EXPECT_NEAR(sol.coeffs(0, 1), -0.13881, 1e-5);
    EXPECT_EQ(sol.coeffs(0, 0), 0.0);
}

TEST(Pse, ZeroSystemGivesZeroManifold) {
    DenseMatrix A = DenseMatrix::Zero(2, 2);
    A(0, 0) = 0.5;
    A(1, 1) = 0.7;
    const auto sol = pse_solve(linear_system(A, DenseMatrix::Constant(1, 1, 0.2), DenseMatrix::Zero(1, 2)), 4);
    EXPECT_EQ(sol.coeffs.norm(), 0.0);
}

TEST(Pse, ResonanceRaises) {
    const auto sys =
        linear_system(DenseMatrix::Constant(1, 1, 0.5), DenseMatrix::Constant(1, 1, 0.25), DenseMatrix::Ones(1, 1));
    // A quadratic forcing term makes the degree-2 system inconsistent with a
    // singular matrix; even without it the order-2 matrix is singular.
    EXPECT_THROW(pse_solve(sys, 3), ResonantOrder);
}

TEST(Pse, OrderMatchingProperty) {
    systems::CarFollowingParams cf;
    cf.Nc = 2;
    for (const auto& [sys, h] : {std::pair{systems::ln_example(-0.4), 8}, std::pair{systems::bioreactor(), 6},
                                 std::pair{systems::car_following(cf), 3}}) {
        const auto sol = pse_solve(sys, h);
        const auto res = nfe_residual_series(sys, sol.as_poly());
        double worst = 0.0;
        for (const auto& r : res)
            for (std::size_t i = 0; i < r.size(); ++i) worst = std::max(worst, std::abs(r[i]));
        EXPECT_LT(worst, 1e-9) << sys.label;
    }
}

TEST(Pse, LegendreCoefficients) {
    const Vector a = ln_orthogonal_coeffs(Family::Legendre, 20);
    EXPECT_NEAR(a(0), std::numbers::ln2 - 1.0, 1e-10);
    EXPECT_TRUE(a.allFinite());
    EXPECT_TRUE(ln_orthogonal_coeffs(Family::Chebyshev2, 20).allFinite());
}

TEST(Pse, OrthogonalReconstructionConverges) {
    for (auto fam : {Family::Legendre, Family::Chebyshev2}) {
        double prev = std::numeric_limits<double>::infinity();
        for (int h : {5, 10, 15, 20}) {
            const double e = max_reconstruction_error(univariate_series(fam, ln_orthogonal_coeffs(fam, h)));
            EXPECT_LE(e, prev) << family_name(fam) << " h=" << h;
            prev = e;
        }
    }
}

TEST(Pse, ChebyshevReconstructionFrozenValue) {
    // Independent quadrature oracle: max |error| on [-0.9, 0.9] at h = 20.
    const double e =
        max_reconstruction_error(univariate_series(Family::Chebyshev2, ln_orthogonal_coeffs(Family::Chebyshev2, 20)));
    EXPECT_NEAR(e, 2.136e-2, 1e-4);
}

TEST(Regression, DemoExamples) {
    const auto d20 = gaussian_regression_demo(20);
    EXPECT_LT(d20.mp_max_err, d20.lm_max_err);
    const auto d10 = gaussian_regression_demo(10);
    EXPECT_LE(std::max(d10.mp_max_err, d10.lm_max_err), 10.0 * std::min(d10.mp_max_err, d10.lm_max_err));

    const auto d0 = gaussian_regression_demo(0, 50, 3);
    CounterRng rng(3);
    double mean = 0.0;
    for (int q = 0; q < 50; ++q) mean += gaussian_profile(rng.uniform(-0.3, 0.3)) / 50.0;
    EXPECT_NEAR(d0.mp_coeffs(0), mean, 1e-12);
    EXPECT_NEAR(d0.lm_coeffs(0), mean, 1e-8);

    EXPECT_THROW(gaussian_regression_demo(10, 10), ConfigError);
}
