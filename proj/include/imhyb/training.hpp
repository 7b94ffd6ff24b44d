#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "imhyb/approximators.hpp"
#include "imhyb/errors.hpp"
#include "imhyb/lm.hpp"
#include "imhyb/numerics/dense.hpp"
#include "imhyb/rng.hpp"
#include "imhyb/sampling.hpp"
#include "imhyb/systems.hpp"

namespace imhyb::training {

using numerics::RowGroup;
using sampling::CollocationSet;
using systems::SystemModel;

enum class InitKind { Parsimonious, Naive };

inline const char* init_name(InitKind k) { return k == InitKind::Naive ? "naive" : "parsimonious"; }

inline InitKind init_from_name(const std::string& s) {
    if (s == "parsimonious") return InitKind::Parsimonious;
    if (s == "naive") return InitKind::Naive;
    throw ConfigError("unknown init '" + s + "'");
}

/// Hyperparameters of a trainable scheme.
struct SchemeSpec {
    SchemeKind kind = SchemeKind::Hybrid;
    Family family = Family::Power;
    int h = 0;
    int L = 0;
    Vector r;
    InitKind init = InitKind::Parsimonious;

    [[nodiscard]] std::string descriptor() const {
        std::string s = scheme_name(kind);
        s += "(";
        if (kind != SchemeKind::NN) s += "h=" + std::to_string(h) + ",family=" + family_name(family);
        if (kind == SchemeKind::Hybrid) s += ",";
        if (kind != SchemeKind::Poly) s += "L=" + std::to_string(L);
        if (kind == SchemeKind::Hybrid) {
            s += ",r=[";
            for (Index m = 0; m < r.size(); ++m) {
                char buf[32];
                std::snprintf(buf, sizeof buf, "%g", r(m));
                s += (m ? "," : "") + std::string(buf);
            }
            s += "]";
        }
        s += ",init=" + std::string(init_name(init)) + ")";
        return s;
    }
};

/// Zero-parameter approximator with the scheme's shape.
inline Approximator make_approximator(const SchemeSpec& spec, int N, int M) {
    switch (spec.kind) {
        case SchemeKind::Poly:
            if (spec.h < 0) throw ConfigError("degree must be >= 0");
            return Approximator(PolyParams(spec.family, N, M, spec.h));
        case SchemeKind::NN:
            if (spec.L < 1) throw ConfigError("hidden width must be >= 1");
            return Approximator(NnParams(N, M, spec.L));
        case SchemeKind::Hybrid: {
            if (spec.h < 0) throw ConfigError("degree must be >= 0");
            if (spec.L < 1) throw ConfigError("hidden width must be >= 1");
            HybridModel hm{PolyParams(spec.family, N, M, spec.h), NnParams(N, M, spec.L), spec.r};
            hm.validate();
            return Approximator(std::move(hm));
        }
    }
    throw ConfigError("unknown scheme");
}

struct ResidualWeights {
    double interior = 1.0;
    double equilibrium = 1.0;
    double boundary = 1.0;
};

/// NFE collocation problem for one approximator shape. Rows: interior
/// residuals ordered (output n, point q) at n Q + q, then one equilibrium row
/// per output, then boundary rows (n, r) at N Q + N + n R + r (hybrid only).
/// Columns follow the flat parameter vector, one block per output.
class NfeProblem {
public:
    NfeProblem(const SystemModel& sys, const CollocationSet& cs, Approximator shape, ResidualWeights w)
        : sys_(sys), model_(std::move(shape)), w_(w) {
        if (model_.N() != sys.N || model_.M() != sys.M) {
            throw DimensionMismatch("approximator dimensions do not match the system");
        }
        if (cs.interior.cols() != sys.M) throw DimensionMismatch("collocation points have wrong dimension");
        N_ = sys.N;
        Q_ = cs.interior.rows();
        for (Index q = 0; q < Q_; ++q) {
            Vector y = cs.interior.row(q).transpose();
            zs_.push_back(sys.driver_step(y));
            ys_.push_back(std::move(y));
        }
        if (model_.kind() == SchemeKind::Hybrid) {
            for (Index r = 0; r < cs.boundary.rows(); ++r) bs_.push_back(cs.boundary.row(r).transpose());
        } else {
            w_.boundary = 0.0;
        }
        R_ = static_cast<Index>(bs_.size());
        bsize_ = model_.block_size();
    }

    [[nodiscard]] Index rows() const { return N_ * (Q_ + 1 + R_); }
    [[nodiscard]] Index cols() const { return model_.num_params(); }
    [[nodiscard]] Index block_size() const { return bsize_; }
    [[nodiscard]] Index num_interior() const { return Q_; }
    [[nodiscard]] Index num_boundary() const { return R_; }
    [[nodiscard]] const ResidualWeights& weights() const { return w_; }
    void set_weights(const ResidualWeights& w) {
        w_ = w;
        if (model_.kind() != SchemeKind::Hybrid) w_.boundary = 0.0;
    }
    [[nodiscard]] const Approximator& shape() const { return model_; }

    [[nodiscard]] Index interior_row(Index n, Index q) const { return n * Q_ + q; }
    [[nodiscard]] Index equilibrium_row(Index n) const { return N_ * Q_ + n; }
    [[nodiscard]] Index boundary_row(Index n, Index r) const { return N_ * Q_ + N_ + n * R_ + r; }

    [[nodiscard]] Approximator at(const Vector& nu) const {
        Approximator m = model_;
        m.unpack(nu);
        return m;
    }

    [[nodiscard]] Vector residuals(const Vector& nu) const {
        const Approximator m = at(nu);
        Vector F(rows());
        for (Index q = 0; q < Q_; ++q) {
            const Vector& y = ys_[static_cast<std::size_t>(q)];
            const Vector xt = m.eval(y);
            const Vector r = m.eval(zs_[static_cast<std::size_t>(q)]) - sys_.B * xt - sys_.C * y - sys_.f(xt, y);
            for (Index n = 0; n < N_; ++n) F(interior_row(n, q)) = w_.interior * r(n);
        }
        const Vector e = m.eval(Vector::Zero(sys_.M));
        for (Index n = 0; n < N_; ++n) F(equilibrium_row(n)) = w_.equilibrium * e(n);
        Vector v;
        DenseMatrix g;
        for (Index r = 0; r < R_; ++r) {
            m.mismatch_grad(bs_[static_cast<std::size_t>(r)], v, g);
            for (Index n = 0; n < N_; ++n) F(boundary_row(n, r)) = w_.boundary * v(n);
        }
        return F;
    }

    [[nodiscard]] DenseMatrix jacobian(const Vector& nu) const {
        const Approximator m = at(nu);
        DenseMatrix J = DenseMatrix::Zero(rows(), cols());
        const Index bs = bsize_;
        Vector vy;
        Vector vz;
        DenseMatrix gy;
        DenseMatrix gz;
        for (Index q = 0; q < Q_; ++q) {
            const Vector& y = ys_[static_cast<std::size_t>(q)];
            m.eval_grad(y, vy, gy);
            m.eval_grad(zs_[static_cast<std::size_t>(q)], vz, gz);
            DenseMatrix Bt = sys_.B + sys_.jac_f_x(vy, y);
            for (Index n = 0; n < N_; ++n) {
                auto row = J.row(interior_row(n, q));
                row.segment(n * bs, bs) += w_.interior * gz.row(n);
                for (Index k = 0; k < N_; ++k) {
                    const double c = Bt(n, k);
                    if (c != 0.0) row.segment(k * bs, bs) -= (w_.interior * c) * gy.row(k);
                }
            }
        }
        m.eval_grad(Vector::Zero(sys_.M), vy, gy);
        for (Index n = 0; n < N_; ++n) J.row(equilibrium_row(n)).segment(n * bs, bs) = w_.equilibrium * gy.row(n);
        for (Index r = 0; r < R_; ++r) {
            m.mismatch_grad(bs_[static_cast<std::size_t>(r)], vy, gy);
            for (Index n = 0; n < N_; ++n) J.row(boundary_row(n, r)).segment(n * bs, bs) = w_.boundary * gy.row(n);
        }
        return J;
    }

    [[nodiscard]] std::vector<RowGroup> row_groups() const {
        std::vector<RowGroup> g;
        for (Index n = 0; n < N_; ++n) g.push_back({interior_row(n, 0), Q_});
        g.push_back({equilibrium_row(0), N_});
        for (Index n = 0; n < N_; ++n) g.push_back({N_ * Q_ + N_ + n * R_, R_});
        return g;
    }

    [[nodiscard]] DenseMatrix gram(const DenseMatrix& J) const {
        const auto groups = row_groups();
        return numerics::blocked_gram(J, groups, bsize_);
    }

    /// Root-mean-square residual of the interior, equilibrium and boundary
    /// groups under unit weights.
    [[nodiscard]] std::array<double, 3> group_rms(const Vector& nu) const {
        NfeProblem unit = *this;
        unit.w_ = {1.0, 1.0, 1.0};
        const Vector F = unit.residuals(nu);
        auto rms = [&](Index begin, Index count) {
            if (count == 0) return 0.0;
            return std::sqrt(F.segment(begin, count).squaredNorm() / static_cast<double>(count));
        };
        return {rms(0, N_ * Q_), rms(N_ * Q_, N_), rms(N_ * Q_ + N_, N_ * R_)};
    }

private:
    const SystemModel& sys_;
    Approximator model_;
    ResidualWeights w_;
    Index N_ = 0;
    Index Q_ = 0;
    Index R_ = 0;
    Index bsize_ = 0;
    std::vector<Vector> ys_;
    std::vector<Vector> zs_;
    std::vector<Vector> bs_;
};

/// Initial flat parameters. Polynomial coefficients: parsimonious draws
/// a ~ U[-1/c, 1/c] with c = max_q |basis_alpha(y_q)| and a zero constant
/// term; naive draws U[-1, 1] throughout. Network: Xavier-uniform hidden and
/// output weights, input weights scaled by the per-coordinate data range,
/// hidden biases Xavier-uniform, output bias 0.
inline Vector init_params(const Approximator& shape, const CollocationSet& cs, std::uint64_t seed,
                          InitKind init = InitKind::Parsimonious) {
    Approximator m = shape;
    CounterRng rng(seed);
    const int N = m.N();
    const int M = m.M();
    if (PolyParams* p = m.poly()) {
        CounterRng prng = rng.substream(0);
        const Index K = p->size();
        Vector c = Vector::Zero(K);
        if (init == InitKind::Parsimonious) {
            Vector f(K);
            for (Index q = 0; q < cs.interior.rows(); ++q) {
                p->features(cs.interior.row(q).transpose(), f.data());
                c = c.cwiseMax(f.cwiseAbs());
            }
            for (Index k = 1; k < K; ++k) {
                if (!(c(k) > 0.0)) {
                    throw DegenerateNormalizer("basis function " + std::to_string(k) +
                                               " vanishes at every collocation point");
                }
            }
        }
        for (int n = 0; n < N; ++n) {
            for (Index k = 0; k < K; ++k) {
                if (init == InitKind::Naive) {
                    p->a(n, k) = prng.uniform(-1.0, 1.0);
                } else {
                    const double bound = 1.0 / c(k);
                    p->a(n, k) = prng.uniform(-bound, bound);
                    if (k == 0) p->a(n, k) = 0.0;
                }
            }
        }
    }
    if (NnParams* net = m.nn()) {
        CounterRng nrng = rng.substream(1);
        const int L = net->L;
        Vector range = Vector::Ones(M);
        if (cs.interior.rows() > 0) {
            range = cs.interior.colwise().maxCoeff().transpose() - cs.interior.colwise().minCoeff().transpose();
            for (int j = 0; j < M; ++j) {
                if (!(range(j) > 0.0)) range(j) = 1.0;
            }
        }
        const double s_in = std::sqrt(6.0 / (M + L));
        const double s_out = std::sqrt(6.0 / (L + 1));
        for (int n = 0; n < N; ++n) {
            for (int l = 0; l < L; ++l) net->p(n, net->wo(l)) = nrng.uniform(-s_out, s_out);
            net->p(n, net->bo()) = 0.0;
            for (int l = 0; l < L; ++l) {
                for (int j = 0; j < M; ++j) net->p(n, net->W(l, j)) = nrng.uniform(-s_in, s_in) * range(j);
            }
            for (int l = 0; l < L; ++l) net->p(n, net->b(l)) = nrng.uniform(-s_in, s_in);
        }
    }
    return m.pack();
}

/// omega_Omega = 1; the equilibrium and boundary weights equalize each
/// group's initial RMS residual with the interior one, clipped to
/// [1e-2, 1e4]. A group with zero RMS keeps weight 1; the standalone network
/// has no boundary group.
inline ResidualWeights balance_weights(const NfeProblem& prob, const Vector& nu0) {
    const auto rms = prob.group_rms(nu0);
    auto ratio = [&](double g) {
        if (!(g > 0.0) || !(rms[0] > 0.0)) return 1.0;
        return std::clamp(rms[0] / g, 1e-2, 1e4);
    };
    ResidualWeights w;
    w.interior = 1.0;
    w.equilibrium = ratio(rms[1]);
    w.boundary = prob.shape().kind() == SchemeKind::Hybrid ? ratio(rms[2]) : 0.0;
    return w;
}

struct TrainReport {
    double final_loss = 0.0;
    int iterations = 0;
    double wall_time_s = 0.0;
    StopReason stop_reason = StopReason::MaxIter;
    std::uint64_t seed = 0;
    std::string scheme;
    ResidualWeights weights;
    std::string error;  // empty on success

    [[nodiscard]] bool ok() const { return error.empty(); }
};

struct TrainOutcome {
    Approximator model;
    TrainReport report;
    std::vector<LmTraceEntry> trace;
};

/// Single realization: initialize, balance, minimize.
inline TrainOutcome train_once(const SchemeSpec& spec, const SystemModel& sys, const CollocationSet& cs,
                               const LmConfig& cfg, std::uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    TrainOutcome out;
    out.report.seed = seed;
    out.report.scheme = spec.descriptor();
    Approximator shape = make_approximator(spec, sys.N, sys.M);
    out.model = shape;
    try {
        const Vector nu0 = init_params(shape, cs, seed, spec.init);
        NfeProblem prob(sys, cs, shape, {});
        const ResidualWeights w = balance_weights(prob, nu0);
        prob.set_weights(w);
        out.report.weights = prob.weights();
        LmResult res = lm_minimize(prob, nu0, cfg, true);
        out.model.unpack(res.params);
        out.report.final_loss = res.final_loss;
        out.report.iterations = res.iterations;
        out.report.stop_reason = res.stop;
        out.trace = std::move(res.trace);
    } catch (const Error& e) {
        out.report.error = e.what();
        out.report.final_loss = std::numeric_limits<double>::quiet_NaN();
    }
    out.report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

/// Seeds of realization i: collocation and initialization streams derived
/// from the ensemble seed.
struct RealizationSeeds {
    std::uint64_t collocation;
    std::uint64_t init;
};

inline RealizationSeeds realization_seeds(std::uint64_t seed, int i) {
    CounterRng base = CounterRng(seed).substream(static_cast<std::uint64_t>(i));
    CounterRng a = base.substream(0);
    CounterRng b = base.substream(1);
    return {a.next_u64(), b.next_u64()};
}

using CollocationFactory = std::function<CollocationSet(std::uint64_t seed)>;

inline unsigned default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

/// n_real independent realizations, each with its own collocation draw and
/// initialization. Output order and values do not depend on thread count.
/// Failures are recorded in the per-realization report.
inline std::vector<TrainOutcome> train_ensemble(const SchemeSpec& spec, const SystemModel& sys,
                                                const CollocationFactory& collocation, int n_real,
                                                const LmConfig& cfg, std::uint64_t seed,
                                                unsigned threads = default_threads()) {
    if (n_real < 1) throw ConfigError("n_real must be >= 1");
    std::vector<TrainOutcome> out(static_cast<std::size_t>(n_real));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int i = next++; i < n_real; i = next++) {
            const RealizationSeeds s = realization_seeds(seed, i);
            TrainOutcome& o = out[static_cast<std::size_t>(i)];
            try {
                const CollocationSet cs = collocation(s.collocation);
                o = train_once(spec, sys, cs, cfg, s.init);
            } catch (const Error& e) {
                o.model = make_approximator(spec, sys.N, sys.M);
                o.report.seed = s.init;
                o.report.scheme = spec.descriptor();
                o.report.error = e.what();
                o.report.final_loss = std::numeric_limits<double>::quiet_NaN();
            }
        }
    };
    const unsigned nt = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n_real)));
    if (nt == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < nt; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return out;
}

}  // namespace imhyb::training
