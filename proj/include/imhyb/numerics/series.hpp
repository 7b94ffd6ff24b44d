#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "imhyb/errors.hpp"

namespace imhyb::numerics {

using MultiIndex = std::vector<int>;

inline int total_degree(const MultiIndex& a) {
    int s = 0;
    for (int e : a) s += e;
    return s;
}

inline std::size_t binomial(std::size_t n, std::size_t k) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    std::size_t r = 1;
    for (std::size_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

namespace detail {

inline void append_degree(int num_vars, int var, int remaining, MultiIndex& cur,
                          std::vector<MultiIndex>& out) {
    if (var == num_vars - 1) {
        cur[var] = remaining;
        out.push_back(cur);
        return;
    }
    for (int e = remaining; e >= 0; --e) {
        cur[var] = e;
        append_degree(num_vars, var + 1, remaining - e, cur, out);
    }
    cur[var] = 0;
}

}  // namespace detail

/// All multi-indices with |alpha| <= degree in graded-lexicographic order:
/// ascending total degree, then descending exponent of the first variable,
/// then of the second, and so on. For two variables and degree 2 this is
/// 1, y1, y2, y1^2, y1 y2, y2^2.
inline std::vector<MultiIndex> graded_lex_indices(int num_vars, int degree) {
    std::vector<MultiIndex> out;
    if (num_vars <= 0) {
        out.emplace_back();
        return out;
    }
    out.reserve(binomial(static_cast<std::size_t>(num_vars + degree),
                         static_cast<std::size_t>(degree)));
    MultiIndex cur(static_cast<std::size_t>(num_vars), 0);
    for (int d = 0; d <= degree; ++d) detail::append_degree(num_vars, 0, d, cur, out);
    return out;
}

/// Immutable term layout of a truncated series ring, shared between all series
/// with the same (num_vars, cap).
class SeriesLayout {
public:
    struct Product {
        std::uint32_t rhs;
        std::uint32_t out;
    };

    SeriesLayout(int num_vars, int cap)
        : num_vars_(num_vars), cap_(cap), indices_(graded_lex_indices(num_vars, cap)) {
        degree_begin_.assign(static_cast<std::size_t>(cap + 2), indices_.size());
        for (std::size_t i = indices_.size(); i-- > 0;) {
            degree_begin_[static_cast<std::size_t>(total_degree(indices_[i]))] = i;
        }
        for (std::size_t i = 0; i < indices_.size(); ++i) position_.emplace(indices_[i], i);
        products_.resize(indices_.size());
        MultiIndex sum(static_cast<std::size_t>(num_vars));
        for (std::size_t i = 0; i < indices_.size(); ++i) {
            const int di = total_degree(indices_[i]);
            const std::size_t jend = degree_begin_[static_cast<std::size_t>(cap - di + 1)];
            for (std::size_t j = 0; j < jend; ++j) {
                for (int m = 0; m < num_vars; ++m) sum[m] = indices_[i][m] + indices_[j][m];
                products_[i].push_back({static_cast<std::uint32_t>(j),
                                        static_cast<std::uint32_t>(position_.at(sum))});
            }
        }
    }

    static std::shared_ptr<const SeriesLayout> get(int num_vars, int cap) {
        static std::mutex mu;
        static std::map<std::pair<int, int>, std::shared_ptr<const SeriesLayout>> cache;
        std::lock_guard lock(mu);
        auto& slot = cache[{num_vars, cap}];
        if (!slot) slot = std::make_shared<const SeriesLayout>(num_vars, cap);
        return slot;
    }

    [[nodiscard]] int num_vars() const { return num_vars_; }
    [[nodiscard]] int cap() const { return cap_; }
    [[nodiscard]] std::size_t size() const { return indices_.size(); }
    [[nodiscard]] const std::vector<MultiIndex>& indices() const { return indices_; }
    [[nodiscard]] const std::vector<Product>& products(std::size_t i) const { return products_[i]; }

    /// First position holding a term of total degree d (size() when d > cap).
    [[nodiscard]] std::size_t degree_begin(int d) const {
        return d > cap_ ? indices_.size() : degree_begin_[static_cast<std::size_t>(d)];
    }

    [[nodiscard]] std::size_t position(const MultiIndex& a) const {
        auto it = position_.find(a);
        if (it == position_.end()) throw CapMismatch("multi-index outside the series layout");
        return it->second;
    }

private:
    int num_vars_;
    int cap_;
    std::vector<MultiIndex> indices_;
    std::vector<std::size_t> degree_begin_;
    std::map<MultiIndex, std::size_t> position_;
    std::vector<std::vector<Product>> products_;
};

/// Multivariate polynomial truncated at total degree cap. Arithmetic is exact
/// in the truncated ring: products drop every term above the cap.
class TruncSeries {
public:
    TruncSeries(int num_vars, int cap)
        : layout_(SeriesLayout::get(num_vars, cap)), c_(layout_->size(), 0.0) {}

    static TruncSeries constant(int num_vars, int cap, double value) {
        TruncSeries s(num_vars, cap);
        s.c_[0] = value;
        return s;
    }

    /// value + y_var.
    static TruncSeries variable(int num_vars, int cap, int var, double value = 0.0) {
        TruncSeries s = constant(num_vars, cap, value);
        if (cap >= 1) {
            MultiIndex e(static_cast<std::size_t>(num_vars), 0);
            e[static_cast<std::size_t>(var)] = 1;
            s.c_[s.layout_->position(e)] = 1.0;
        }
        return s;
    }

    [[nodiscard]] int num_vars() const { return layout_->num_vars(); }
    [[nodiscard]] int cap() const { return layout_->cap(); }
    [[nodiscard]] const SeriesLayout& layout() const { return *layout_; }
    [[nodiscard]] std::size_t size() const { return c_.size(); }

    [[nodiscard]] double constant_term() const { return c_[0]; }
    [[nodiscard]] const std::vector<double>& coeffs() const { return c_; }
    std::vector<double>& coeffs() { return c_; }
    double& operator[](std::size_t i) { return c_[i]; }
    double operator[](std::size_t i) const { return c_[i]; }

    [[nodiscard]] double coeff(const MultiIndex& a) const {
        if (total_degree(a) > cap()) return 0.0;
        return c_[layout_->position(a)];
    }
    void set_coeff(const MultiIndex& a, double v) { c_[layout_->position(a)] = v; }

    [[nodiscard]] bool same_ring(const TruncSeries& o) const { return layout_ == o.layout_; }

    /// Copy with every term of degree > d removed.
    [[nodiscard]] TruncSeries truncated(int d) const {
        TruncSeries r = *this;
        for (std::size_t i = layout_->degree_begin(d + 1); i < c_.size(); ++i) r.c_[i] = 0.0;
        return r;
    }

    TruncSeries& operator+=(const TruncSeries& o) {
        check(o);
        for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
        return *this;
    }
    TruncSeries& operator-=(const TruncSeries& o) {
        check(o);
        for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
        return *this;
    }
    TruncSeries& operator*=(double s) {
        for (double& v : c_) v *= s;
        return *this;
    }
    TruncSeries& operator+=(double s) {
        c_[0] += s;
        return *this;
    }
    TruncSeries& operator-=(double s) {
        c_[0] -= s;
        return *this;
    }

    friend TruncSeries operator*(const TruncSeries& a, const TruncSeries& b) {
        a.check(b);
        TruncSeries r(a.num_vars(), a.cap());
        for (std::size_t i = 0; i < a.c_.size(); ++i) {
            const double ai = a.c_[i];
            if (ai == 0.0) continue;
            for (const auto& p : a.layout_->products(i)) r.c_[p.out] += ai * b.c_[p.rhs];
        }
        return r;
    }

private:
    void check(const TruncSeries& o) const {
        if (!same_ring(o)) {
            throw CapMismatch("series rings differ: (" + std::to_string(num_vars()) + "," +
                              std::to_string(cap()) + ") vs (" + std::to_string(o.num_vars()) +
                              "," + std::to_string(o.cap()) + ")");
        }
    }

    std::shared_ptr<const SeriesLayout> layout_;
    std::vector<double> c_;
};

inline TruncSeries operator+(TruncSeries a, const TruncSeries& b) { return a += b; }
inline TruncSeries operator-(TruncSeries a, const TruncSeries& b) { return a -= b; }
inline TruncSeries operator-(TruncSeries a) { return a *= -1.0; }
inline TruncSeries operator*(TruncSeries a, double s) { return a *= s; }
inline TruncSeries operator*(double s, TruncSeries a) { return a *= s; }
inline TruncSeries operator/(TruncSeries a, double s) { return a *= 1.0 / s; }
inline TruncSeries operator+(TruncSeries a, double s) { return a += s; }
inline TruncSeries operator+(double s, TruncSeries a) { return a += s; }
inline TruncSeries operator-(TruncSeries a, double s) { return a -= s; }
inline TruncSeries operator-(double s, TruncSeries a) {
    a *= -1.0;
    return a += s;
}

enum class SeriesOp { Add, Mul };

inline TruncSeries series_arith(const TruncSeries& lhs, const TruncSeries& rhs, SeriesOp op) {
    return op == SeriesOp::Add ? lhs + rhs : lhs * rhs;
}

/// sum_j taylor[j] (x - x0)^j with x0 the constant term of x, truncated at
/// the cap. taylor[j] must hold f^(j)(x0) / j!.
inline TruncSeries compose_univariate(const TruncSeries& x, const std::vector<double>& taylor) {
    TruncSeries d = x;
    d[0] = 0.0;
    const int n = std::min<int>(static_cast<int>(taylor.size()) - 1, x.cap());
    TruncSeries r = TruncSeries::constant(x.num_vars(), x.cap(), n >= 0 ? taylor[n] : 0.0);
    for (int j = n - 1; j >= 0; --j) {
        r = r * d;
        r[0] += taylor[static_cast<std::size_t>(j)];
    }
    return r;
}

namespace taylor {

inline std::vector<double> exp(double x0, int order) {
    std::vector<double> a(static_cast<std::size_t>(order + 1));
    a[0] = std::exp(x0);
    for (int j = 1; j <= order; ++j) a[j] = a[j - 1] / j;
    return a;
}

inline std::vector<double> pow(double x0, double beta, int order) {
    const bool integral = beta == std::floor(beta);
    if (x0 == 0.0 || (!integral && x0 < 0.0)) {
        throw SingularExpansionPoint("pow(x, " + std::to_string(beta) +
                                     ") expanded at x0 = " + std::to_string(x0));
    }
    std::vector<double> a(static_cast<std::size_t>(order + 1));
    a[0] = std::pow(x0, beta);
    for (int j = 1; j <= order; ++j) a[j] = a[j - 1] * (beta - (j - 1)) / (j * x0);
    return a;
}

/// tanh^(j)(x0)/j! from d/dx P(t) = P'(t) (1 - t^2), t = tanh(x0).
inline std::vector<double> tanh(double x0, int order) {
    const double t = std::tanh(x0);
    std::vector<double> a(static_cast<std::size_t>(order + 1));
    std::vector<double> poly{0.0, 1.0};  // P_0(t) = t
    double fact = 1.0;
    for (int j = 0; j <= order; ++j) {
        double v = 0.0;
        for (std::size_t k = poly.size(); k-- > 0;) v = v * t + poly[k];
        if (j > 0) fact *= j;
        a[static_cast<std::size_t>(j)] = v / fact;
        std::vector<double> next(poly.size() + 2, 0.0);
        for (std::size_t k = 1; k < poly.size(); ++k) {
            const double dk = poly[k] * static_cast<double>(k);
            next[k - 1] += dk;
            next[k + 1] -= dk;
        }
        poly = std::move(next);
    }
    return a;
}

}  // namespace taylor

inline TruncSeries exp(const TruncSeries& x) {
    return compose_univariate(x, taylor::exp(x.constant_term(), x.cap()));
}
inline TruncSeries pow(const TruncSeries& x, double beta) {
    return compose_univariate(x, taylor::pow(x.constant_term(), beta, x.cap()));
}
inline TruncSeries reciprocal(const TruncSeries& x) { return pow(x, -1.0); }
inline TruncSeries tanh(const TruncSeries& x) {
    return compose_univariate(x, taylor::tanh(x.constant_term(), x.cap()));
}
inline TruncSeries operator/(const TruncSeries& a, const TruncSeries& b) { return a * reciprocal(b); }
inline TruncSeries operator/(double s, const TruncSeries& b) { return s * reciprocal(b); }

enum class Elementary { Exp, Pow, Reciprocal, Tanh };

inline TruncSeries series_elementary(const TruncSeries& x, Elementary fn, double beta = 1.0) {
    switch (fn) {
        case Elementary::Exp: return exp(x);
        case Elementary::Pow: return pow(x, beta);
        case Elementary::Reciprocal: return reciprocal(x);
        case Elementary::Tanh: return tanh(x);
    }
    return x;
}

}  // namespace imhyb::numerics
