// Acceptance run: one PASS/FAIL line per criterion, details on the lines
// below it. Exit status is non-zero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#include "test_util.hpp"

using namespace imhyb;

namespace {

constexpr std::uint64_t kTestSeed = 7;
constexpr std::uint64_t kEnsembleSeed = 11;
constexpr int kTestSize = 10000;

int failures = 0;
bool all_traces_decreasing = true;
int traces_checked = 0;

void report(int id, const char* title, bool pass, const std::string& detail) {
    std::printf("criterion %2d: %s  %s\n", id, pass ? "PASS" : "FAIL", title);
    if (!detail.empty()) std::printf("    %s\n", detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

void run(int id, const char* title, const std::function<std::pair<bool, std::string>()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    bool pass = false;
    std::string detail;
    try {
        std::tie(pass, detail) = body();
    } catch (const std::exception& e) {
        detail = std::string("exception: ") + e.what();
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char buf[64];
    std::snprintf(buf, sizeof buf, " [%.1f s]", s);
    report(id, title, pass, detail + buf);
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

void check_traces(const std::vector<training::TrainOutcome>& ens) {
    for (const auto& o : ens) {
        if (!o.report.ok()) continue;
        ++traces_checked;
        double last = std::numeric_limits<double>::infinity();
        for (const auto& t : o.trace) {
            if (!t.accepted) continue;
            if (!(t.loss < last)) all_traces_decreasing = false;
            last = t.loss;
        }
    }
}

struct EnsembleResult {
    std::vector<double> l2;
    int converged = 0;
    int failed = 0;
};

EnsembleResult evaluate_ensemble(const std::vector<training::TrainOutcome>& ens, const sampling::TestSet& ts,
                                 double loss_target) {
    EnsembleResult r;
    for (const auto& o : ens) {
        if (!o.report.ok()) {
            ++r.failed;
            continue;
        }
        r.l2.push_back(evaluation::error_report(o.model, ts).component_mean.l2);
        if (o.report.final_loss < loss_target) ++r.converged;
    }
    return r;
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(v.size());
}

}  // namespace

int main() {
    std::printf("imhyb acceptance run\n");

    // ------------------------------------------------------------------ 1
    run(1, "exact-manifold residual, ln example", [] {
        const auto sys = systems::ln_example(-0.4);
        CounterRng rng(1);
        sampling::CollocationSet cs;
        cs.interior.resize(1000, 1);
        for (Index q = 0; q < 1000; ++q) cs.interior(q, 0) = rng.uniform(-0.9, 2.0);
        double worst = 0.0;
        for (Index q = 0; q < 1000; ++q) {
            const double y = cs.interior(q, 0);
            const double gy = sys.driver_step(Vector::Constant(1, y))(0);
            const double lhs = systems::ln_exact_map(gy);
            const double x = systems::ln_exact_map(y);
            const Vector fx = sys.f_real(Vector::Constant(1, x), Vector::Constant(1, y));
            const double rhs = sys.B(0, 0) * x + sys.C(0, 0) * y + fx(0);
            worst = std::max(worst, std::abs(lhs - rhs));
        }
        return std::pair{worst < 1e-12, fmt("max |r| = %.3e over 1000 points (target < 1e-12)", worst)};
    });

    // ------------------------------------------------------------------ 2
    run(2, "analytic Jacobian vs central differences", [] {
        CounterRng rng(2);
        double worst = 0.0;
        int probes = 0;
        for (int N = 1; N <= 2; ++N) {
            for (int M = 1; M <= 2; ++M) {
                const auto sys = testing::toy_system(N, M);
                for (auto fam : {Family::Power, Family::Legendre, Family::Chebyshev2}) {
                    for (auto kind : {SchemeKind::Poly, SchemeKind::NN, SchemeKind::Hybrid}) {
                        training::SchemeSpec s;
                        s.kind = kind;
                        s.family = fam;
                        s.h = 3;
                        s.L = 4;
                        s.r = Vector::Constant(M, 0.6);
                        sampling::CollocationSet cs;
                        cs.interior.resize(12, M);
                        for (Index q = 0; q < 12; ++q)
                            for (int m = 0; m < M; ++m) cs.interior(q, m) = rng.uniform(-1.2, 1.2);
                        cs.boundary = kind == SchemeKind::Hybrid ? sampling::boundary_points(s.r) : DenseMatrix(0, M);
                        training::NfeProblem prob(sys, cs, training::make_approximator(s, N, M), {1.0, 0.8, 1.2});
                        Vector nu(prob.cols());
                        for (Index c = 0; c < nu.size(); ++c) nu(c) = rng.uniform(-0.5, 0.5);
                        const DenseMatrix J = prob.jacobian(nu);
                        for (Index c = 0; c < nu.size(); ++c) {
                            const double hs = 1e-6 * std::max(1.0, std::abs(nu(c)));
                            Vector p = nu;
                            Vector q = nu;
                            p(c) += hs;
                            q(c) -= hs;
                            const Vector fd = (prob.residuals(p) - prob.residuals(q)) / (2 * hs);
                            worst = std::max(worst, (fd - J.col(c)).norm() / std::max(1.0, J.col(c).norm()));
                            ++probes;
                        }
                    }
                }
            }
        }
        return std::pair{worst < 1e-6 && probes >= 100,
                         fmt("max relative column deviation %.3e over %d probes (target < 1e-6, >= 100)", worst,
                             probes)};
    });

    // ------------------------------------------------------------------ 3
    run(3, "power-series oracle, ln example h = 10", [] {
        const auto sol = pse_solve(systems::ln_example(-0.4), 10);
        double worst = std::abs(sol.coeffs(0, 0));
        for (int i = 1; i <= 10; ++i) worst = std::max(worst, std::abs(sol.coeffs(0, i) - ((i % 2) ? 1.0 : -1.0) / i));
        return std::pair{worst < 1e-8, fmt("max |d alpha| = %.3e (target < 1e-8)", worst)};
    });

    // ------------------------------------------------------------------ 4, 8
    std::vector<training::TrainOutcome> bio_pars;
    std::vector<training::TrainOutcome> bio_naive;
    sampling::TestSet bio_ts;
    run(4, "bioreactor: degree-10 series vs trained hybrid power series, r = 2", [&] {
        const auto sys = systems::bioreactor();
        const auto plan = sampling::bioreactor_plan();
        bio_ts = sampling::build_test_set(sys, kTestSize, kTestSeed, plan);
        const double pse_l2 =
            evaluation::error_report(Approximator(pse_solve(sys, 10).as_poly()), bio_ts).component_mean.l2;
        training::SchemeSpec spec;
        spec.kind = SchemeKind::Hybrid;
        spec.family = Family::Power;
        spec.h = 10;
        spec.L = 10;
        spec.r = Vector::Constant(1, 2.0);
        const Vector r = spec.r;
        const int Q = sampling::collocation_count(sys.N, sys.M, spec.L);
        training::CollocationFactory fac = [&](std::uint64_t s) {
            return sampling::make_collocation(sys, Q, &r, plan, s);
        };
        bio_pars = training::train_ensemble(spec, sys, fac, 20, LmConfig{}, kEnsembleSeed);
        spec.init = training::InitKind::Naive;
        bio_naive = training::train_ensemble(spec, sys, fac, 20, LmConfig{}, kEnsembleSeed);
        check_traces(bio_pars);
        const auto ev = evaluate_ensemble(bio_pars, bio_ts, 1e-6);
        const double m = mean(ev.l2);
        const bool pass = pse_l2 >= 3e-3 && pse_l2 <= 4e-2 && ev.failed == 0 && m <= 1e-3 && m < pse_l2;
        // Not gating: the mean over runs with loss < 1e-6 and the median.
        std::vector<double> conv;
        for (std::size_t i = 0, j = 0; i < bio_pars.size(); ++i) {
            if (!bio_pars[i].report.ok()) continue;
            if (bio_pars[i].report.final_loss < 1e-6) conv.push_back(ev.l2[j]);
            ++j;
        }
        return std::pair{pass, fmt("series L2 %.4e (target [3e-3, 4e-2]); hybrid mean L2 %.4e over %zu runs, "
                                   "%d failed (target <= 1e-3 and below the series); median %.4e, mean over "
                                   "%zu runs with loss < 1e-6 %.4e",
                                   pse_l2, m, ev.l2.size(), ev.failed, evaluation::median(ev.l2), conv.size(),
                                   mean(conv))};
    });

    // ------------------------------------------------------------------ 5
    run(5, "ln example h = 20: trained hybrid Legendre vs analytic series", [] {
        const auto sys = systems::ln_example(-0.4);
        const std::function<Vector(const Vector&)> exact = [](const Vector& y) {
            return Vector::Constant(1, systems::ln_exact_map(y(0))).eval();
        };
        const auto plan = sampling::generic_plan(sys);
        const auto ts = sampling::build_test_set(sys, kTestSize, kTestSeed, plan, &exact);
        double series[3];
        int k = 0;
        series[k++] = evaluation::error_report(Approximator(univariate_series(Family::Power, ln_power_coeffs(20))), ts)
                          .component_mean.l2;
        for (auto fam : {Family::Legendre, Family::Chebyshev2}) {
            series[k++] =
                evaluation::error_report(Approximator(univariate_series(fam, ln_orthogonal_coeffs(fam, 20))), ts)
                    .component_mean.l2;
        }
        training::SchemeSpec spec;
        spec.kind = SchemeKind::Hybrid;
        spec.family = Family::Legendre;
        spec.h = 20;
        spec.L = 10;
        spec.r = Vector::Constant(1, 1.0);
        const Vector r = spec.r;
        const int Q = sampling::collocation_count(sys.N, sys.M, spec.L);
        training::CollocationFactory fac = [&](std::uint64_t s) {
            return sampling::make_collocation(sys, Q, &r, plan, s);
        };
        const auto ens = training::train_ensemble(spec, sys, fac, 20, LmConfig{}, kEnsembleSeed);
        check_traces(ens);
        const auto ev = evaluate_ensemble(ens, ts, 1e-6);
        const double m = mean(ev.l2);
        const bool pass = ev.failed == 0 && m <= 1e-4 && series[0] > 1e2 && series[1] > 1e2 && series[2] > 1e2;
        return std::pair{pass, fmt("hybrid mean L2 %.4e over %zu runs, %d failed (target <= 1e-4); "
                                   "power/Legendre/Chebyshev series L2 %.4e / %.4e / %.4e (target > 1e2)",
                                   m, ev.l2.size(), ev.failed, series[0], series[1], series[2])};
    });

    // ------------------------------------------------------------------ 6
    run(6, "regression demo: pseudo-inverse vs LM", [] {
        const auto d20 = gaussian_regression_demo(20);
        const auto d10 = gaussian_regression_demo(10);
        const double ratio = std::max(d10.mp_max_err, d10.lm_max_err) / std::min(d10.mp_max_err, d10.lm_max_err);
        const bool pass = d20.mp_max_err < d20.lm_max_err && ratio <= 10.0;
        return std::pair{pass, fmt("h=20: MP %.3e, LM %.3e (MP strictly lower); h=10: MP %.3e, LM %.3e, "
                                   "ratio %.2f (target <= 10)",
                                   d20.mp_max_err, d20.lm_max_err, d10.mp_max_err, d10.lm_max_err, ratio)};
    });

    // ------------------------------------------------------------------ 7
    run(7, "LM sanity: linear problem and monotone accepted losses", [] {
        struct Linear {
            DenseMatrix V;
            Vector y;
            [[nodiscard]] Vector residuals(const Vector& c) const { return V * c - y; }
            [[nodiscard]] DenseMatrix jacobian(const Vector&) const { return V; }
        };
        CounterRng rng(7);
        Linear prob{DenseMatrix(40, 5), Vector(40)};
        for (Index i = 0; i < 40; ++i) {
            const double x = rng.uniform(-1, 1);
            for (Index j = 0; j < 5; ++j) prob.V(i, j) = std::pow(x, static_cast<double>(j));
            prob.y(i) = rng.uniform(-1, 1);
        }
        LmConfig cfg;
        cfg.tol_F = 1e-15;
        cfg.tol_R = 1e-15;
        const auto res = lm_minimize(prob, Vector::Zero(5), cfg);
        const double dev = (res.params - numerics::pinv_solve(prob.V, prob.y)).norm();
        const bool pass = dev < 1e-8 && all_traces_decreasing && traces_checked >= 40;
        return std::pair{pass, fmt("|c_LM - c_pinv| = %.3e (target < 1e-8); accepted losses strictly decreasing "
                                   "in %d runs of criteria 4-5: %s",
                                   dev, traces_checked, all_traces_decreasing ? "yes" : "no")};
    });

    // ------------------------------------------------------------------ 8
    run(8, "convergence robustness: parsimonious vs naive initialization", [&] {
        if (bio_pars.empty() || bio_naive.empty()) throw Error("criterion 4 ensembles unavailable");
        auto rate = [](const std::vector<training::TrainOutcome>& ens) {
            int ok = 0;
            for (const auto& o : ens) ok += o.report.ok() && o.report.final_loss < 1e-6;
            return ok;
        };
        const int p = rate(bio_pars);
        const int n = rate(bio_naive);
        const bool pass = p >= 19 && n < p;
        return std::pair{pass, fmt("loss < 1e-6: parsimonious %d/20 (target >= 19), naive %d/20 (target < %d)", p,
                                   n, p)};
    });

    // ------------------------------------------------------------------ 9
    run(9, "width trend: median network L2 over L = 2, 5, 10, 20", [] {
        const auto sys = systems::ln_example(-0.4);
        const std::function<Vector(const Vector&)> exact = [](const Vector& y) {
            return Vector::Constant(1, systems::ln_exact_map(y(0))).eval();
        };
        const auto plan = sampling::generic_plan(sys);
        const auto ts = sampling::build_test_set(sys, kTestSize, kTestSeed, plan, &exact);
        std::vector<double> medians;
        std::string detail = "medians:";
        for (int L : {2, 5, 10, 20}) {
            training::SchemeSpec spec;
            spec.kind = SchemeKind::NN;
            spec.L = L;
            const int Q = sampling::collocation_count(sys.N, sys.M, L);
            training::CollocationFactory fac = [&](std::uint64_t s) {
                return sampling::make_collocation(sys, Q, nullptr, plan, s);
            };
            const auto ens = training::train_ensemble(spec, sys, fac, 10, LmConfig{}, kEnsembleSeed);
            std::vector<double> l2;
            for (const auto& o : ens) {
                l2.push_back(o.report.ok() ? evaluation::error_report(o.model, ts).component_mean.l2
                                           : std::numeric_limits<double>::infinity());
            }
            medians.push_back(evaluation::median(l2));
            detail += fmt(" L=%d %.3e", L, medians.back());
        }
        bool pass = true;
        for (std::size_t i = 1; i < medians.size(); ++i) pass = pass && medians[i] <= medians[i - 1];
        return std::pair{pass, detail + " (target non-increasing)"};
    });

    // ------------------------------------------------------------------ 10
    run(10, "car following, Nc = 3: trained hybrid vs degree-3 series", [] {
        systems::CarFollowingParams cf;
        cf.Nc = 3;
        const auto sys = systems::car_following(cf);
        const auto check = systems::check_assumptions(sys);
        const auto plan = sampling::car_following_plan(cf, sys);
        const auto ts = sampling::build_test_set(sys, kTestSize, kTestSeed, plan);
        const double pse_l2 =
            evaluation::error_report(Approximator(pse_solve(sys, 3).as_poly()), ts).component_mean.l2;
        training::SchemeSpec spec;
        spec.kind = SchemeKind::Hybrid;
        spec.family = Family::Power;
        spec.h = 3;
        spec.L = 20;
        spec.r = Vector::Constant(2, 1.0);
        const Vector r = spec.r;
        const int Q = sampling::collocation_count(sys.N, sys.M, spec.L);
        training::CollocationFactory fac = [&](std::uint64_t s) {
            return sampling::make_collocation(sys, Q, &r, plan, s);
        };
        // The 1000-iteration default budget stops these runs well short of
        // convergence; see the README.
        LmConfig cfg;
        cfg.k_max = 4000;
        const auto ens = training::train_ensemble(spec, sys, fac, 10, cfg, kEnsembleSeed);
        const auto ev = evaluate_ensemble(ens, ts, 1e-6);
        const double m = mean(ev.l2);
        const double ratio = m / pse_l2;
        const bool pass = check.passed() && ev.failed == 0 && ratio <= 0.2;
        return std::pair{pass, fmt("assumptions %s; series L2 %.4e, hybrid mean L2 %.4e over %zu runs, %d failed, "
                                   "ratio %.3f (target <= 0.2; k_max = %d)",
                                   check.passed() ? "pass" : "fail", pse_l2, m, ev.l2.size(), ev.failed, ratio,
                                   cfg.k_max)};
    });

    std::printf("%d of 10 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
