#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "imhyb/approximators.hpp"
#include "imhyb/errors.hpp"
#include "imhyb/sampling.hpp"

namespace imhyb::evaluation {

using sampling::TestSet;
using ModelFn = std::function<Vector(const Vector&)>;

struct Norms {
    double l1 = 0.0;
    double l2 = 0.0;
    double linf = 0.0;
};

/// Per component n: ||x_n - pi_n(y)||_p / ||x_n||_p over the test set.
struct ErrorReport {
    std::vector<Norms> per_component;
    Norms component_mean;
};

inline ModelFn as_fn(const Approximator& m) {
    return [&m](const Vector& y) { return m.eval(y); };
}

inline ErrorReport error_report(const ModelFn& model, const TestSet& ts) {
    const Index S = ts.size();
    const Index N = ts.x.cols();
    if (ts.y.rows() != S || S == 0) throw DimensionMismatch("empty or inconsistent test set");
    std::vector<Norms> err(static_cast<std::size_t>(N));
    std::vector<Norms> ref(static_cast<std::size_t>(N));
    for (Index s = 0; s < S; ++s) {
        const Vector pred = model(ts.y.row(s).transpose());
        if (pred.size() != N) throw DimensionMismatch("model output size does not match the test set");
        for (Index n = 0; n < N; ++n) {
            const double e = std::abs(ts.x(s, n) - pred(n));
            const double x = std::abs(ts.x(s, n));
            auto& E = err[static_cast<std::size_t>(n)];
            auto& X = ref[static_cast<std::size_t>(n)];
            E.l1 += e;
            E.l2 += e * e;
            E.linf = std::max(E.linf, e);
            X.l1 += x;
            X.l2 += x * x;
            X.linf = std::max(X.linf, x);
        }
    }
    ErrorReport rep;
    for (Index n = 0; n < N; ++n) {
        const auto& E = err[static_cast<std::size_t>(n)];
        const auto& X = ref[static_cast<std::size_t>(n)];
        if (!(X.l1 > 0.0) || !(X.l2 > 0.0) || !(X.linf > 0.0)) {
            throw ZeroNormReference("component " + std::to_string(n + 1) + " is identically zero on the test set");
        }
        Norms r{E.l1 / X.l1, std::sqrt(E.l2) / std::sqrt(X.l2), E.linf / X.linf};
        rep.per_component.push_back(r);
        rep.component_mean.l1 += r.l1 / static_cast<double>(N);
        rep.component_mean.l2 += r.l2 / static_cast<double>(N);
        rep.component_mean.linf += r.linf / static_cast<double>(N);
    }
    return rep;
}

inline ErrorReport error_report(const Approximator& model, const TestSet& ts) { return error_report(as_fn(model), ts); }

struct Summary {
    double mean = 0.0;
    double p5 = 0.0;
    double p95 = 0.0;
};

/// Type-7 sample quantile (linear interpolation between order statistics).
inline double quantile(std::vector<double> v, double p) {
    if (v.empty()) throw DimensionMismatch("quantile of an empty sample");
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double median(const std::vector<double>& v) { return quantile(v, 0.5); }

inline Summary summarize(const std::vector<double>& v) {
    if (v.empty()) throw DimensionMismatch("summary of an empty sample");
    Summary s;
    double sum = 0.0;
    for (double x : v) sum += x;
    s.mean = sum / static_cast<double>(v.size());
    s.p5 = quantile(v, 0.05);
    s.p95 = quantile(v, 0.95);
    return s;
}

struct EnsembleStats {
    Summary l1;
    Summary l2;
    Summary linf;
    int count = 0;
};

/// Mean and 5th/95th percentiles of the component-mean norms.
inline EnsembleStats ensemble_stats(const std::vector<ErrorReport>& reports) {
    if (reports.empty()) throw DimensionMismatch("no reports");
    std::vector<double> a;
    std::vector<double> b;
    std::vector<double> c;
    for (const auto& r : reports) {
        a.push_back(r.component_mean.l1);
        b.push_back(r.component_mean.l2);
        c.push_back(r.component_mean.linf);
    }
    return {summarize(a), summarize(b), summarize(c), static_cast<int>(reports.size())};
}

/// One record per test point: y, x and |x_n - pi_n(y)| / |x_n|.
struct PointRecord {
    Vector y;
    Vector x;
    Vector rel_err;
};

inline std::vector<PointRecord> pointwise_dump(const ModelFn& model, const TestSet& ts) {
    std::vector<PointRecord> out;
    out.reserve(static_cast<std::size_t>(ts.size()));
    for (Index s = 0; s < ts.size(); ++s) {
        PointRecord r;
        r.y = ts.y.row(s).transpose();
        r.x = ts.x.row(s).transpose();
        const Vector pred = model(r.y);
        r.rel_err = ((r.x - pred).cwiseAbs().array() / r.x.cwiseAbs().array()).matrix();
        out.push_back(std::move(r));
    }
    return out;
}

inline std::vector<PointRecord> pointwise_dump(const Approximator& model, const TestSet& ts) {
    return pointwise_dump(as_fn(model), ts);
}

inline std::string pointwise_header(int M, int N) {
    return sampling::detail::header("y", M) + "," + sampling::detail::header("x", N) + "," +
           sampling::detail::header("err", N);
}

inline std::string pointwise_row(const PointRecord& r) {
    std::string s;
    auto put = [&](const Vector& v) {
        for (Index i = 0; i < v.size(); ++i) {
            if (!s.empty()) s += ',';
            s += sampling::detail::fmt17(v(i));
        }
    };
    put(r.y);
    put(r.x);
    put(r.rel_err);
    return s;
}

}  // namespace imhyb::evaluation
