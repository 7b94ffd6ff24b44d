#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "imhyb/errors.hpp"
#include "imhyb/numerics/dense.hpp"
#include "imhyb/rng.hpp"
#include "imhyb/systems.hpp"

namespace imhyb::sampling {

using numerics::DenseMatrix;
using numerics::Index;
using numerics::Vector;
using systems::SystemModel;

enum class Provenance { UniformGrid, Trajectory, SimulatedTrajectories, ExactMap };

inline const char* provenance_name(Provenance p) {
    switch (p) {
        case Provenance::UniformGrid: return "UniformGrid";
        case Provenance::Trajectory: return "Trajectory";
        case Provenance::SimulatedTrajectories: return "SimulatedTrajectories";
        case Provenance::ExactMap: return "ExactMap";
    }
    return "?";
}

inline Provenance provenance_from_name(const std::string& s) {
    for (Provenance p : {Provenance::UniformGrid, Provenance::Trajectory, Provenance::SimulatedTrajectories,
                         Provenance::ExactMap}) {
        if (s == provenance_name(p)) return p;
    }
    throw ModelFormatError("unknown provenance '" + s + "'");
}

/// Rows are points.
struct CollocationSet {
    DenseMatrix interior;  // Q x M
    DenseMatrix boundary;  // R x M (empty without a gate)
    Provenance provenance = Provenance::UniformGrid;
    std::uint64_t seed = 0;
};

struct TestSet {
    DenseMatrix y;  // S x M
    DenseMatrix x;  // S x N
    Provenance source = Provenance::SimulatedTrajectories;
    std::uint64_t seed = 0;

    [[nodiscard]] Index size() const { return y.rows(); }
};

/// 20 times the parameter count of one network output.
inline int collocation_count(int /*N*/, int M, int L) {
    if (L < 1) throw ConfigError("hidden width must be >= 1");
    return 20 * (L * (M + 2) + 1);
}

/// Points on the faces of the box |y_m| <= r_m. M = 1 gives -r, +r; otherwise
/// each of the 2M faces carries a 5-per-axis lattice of cell centres over the
/// free coordinates.
inline DenseMatrix boundary_points(const Vector& r) {
    const int M = static_cast<int>(r.size());
    for (int m = 0; m < M; ++m) {
        if (!(r(m) > 0.0)) throw ConfigError("gate radius components must be positive");
    }
    if (M == 1) {
        DenseMatrix out(2, 1);
        out << -r(0), r(0);
        return out;
    }
    int per_face = 1;
    for (int m = 1; m < M; ++m) per_face *= 5;
    DenseMatrix out(2 * M * per_face, M);
    Index row = 0;
    for (int m = 0; m < M; ++m) {
        for (double sign : {-1.0, 1.0}) {
            for (int c = 0; c < per_face; ++c) {
                int code = c;
                for (int j = M - 1; j >= 0; --j) {
                    if (j == m) {
                        out(row, j) = sign * r(j);
                        continue;
                    }
                    const int i = code % 5;
                    code /= 5;
                    out(row, j) = -r(j) + (2.0 * i + 1.0) * r(j) / 5.0;
                }
                ++row;
            }
        }
    }
    return out;
}

/// Recorded states of one trajectory, stored flat (row k = step k).
struct Trajectory {
    std::vector<double> y;  // length K * M
    std::vector<double> x;  // length K * N
    int M = 0;
    int N = 0;

    [[nodiscard]] std::size_t length() const { return M ? y.size() / static_cast<std::size_t>(M) : 0; }
};

using TrajectoryBatch = std::vector<Trajectory>;

/// Draws a deviation-coordinate initial state (x(0), y(0)).
using InitSampler = std::function<std::pair<Vector, Vector>(CounterRng&)>;

/// Simulates from n_ic initial conditions, drops k_trans steps and records
/// states until every deviation variable is below cutoff in magnitude.
/// Initial condition i uses rng.substream(i).
inline TrajectoryBatch simulate_batch(const SystemModel& sys, int n_ic, const InitSampler& init, int k_trans,
                                      const CounterRng& rng, double cutoff = 1e-3, long step_cap = 1000000) {
    TrajectoryBatch batch;
    batch.reserve(static_cast<std::size_t>(n_ic));
    for (int i = 0; i < n_ic; ++i) {
        CounterRng sub = rng.substream(static_cast<std::uint64_t>(i));
        auto [x, y] = init(sub);
        long steps = 0;
        for (int k = 0; k < k_trans; ++k) {
            std::tie(x, y) = systems::step(sys, x, y);
            ++steps;
        }
        Trajectory tr;
        tr.M = sys.M;
        tr.N = sys.N;
        auto inside = [&] {
            return x.cwiseAbs().maxCoeff() < cutoff && (y.size() == 0 || y.cwiseAbs().maxCoeff() < cutoff);
        };
        while (!inside()) {
            if (steps >= step_cap) {
                throw NonConvergentTrajectory("trajectory " + std::to_string(i) + " not inside the cutoff ball after " +
                                              std::to_string(step_cap) + " steps");
            }
            if (!x.allFinite() || !y.allFinite()) {
                throw NonConvergentTrajectory("trajectory " + std::to_string(i) + " became non-finite");
            }
            tr.y.insert(tr.y.end(), y.data(), y.data() + y.size());
            tr.x.insert(tr.x.end(), x.data(), x.data() + x.size());
            std::tie(x, y) = systems::step(sys, x, y);
            ++steps;
        }
        batch.push_back(std::move(tr));
    }
    return batch;
}

/// n points at equal increments of cumulative polyline length; rows of traj
/// are the vertices.
inline DenseMatrix arc_length_resample(const DenseMatrix& traj, int n) {
    if (traj.rows() < 2) throw DegenerateTrajectory("need at least two points");
    if (n < 2) throw DegenerateTrajectory("need at least two output points");
    std::vector<double> cum(static_cast<std::size_t>(traj.rows()), 0.0);
    for (Index k = 1; k < traj.rows(); ++k) {
        cum[static_cast<std::size_t>(k)] = cum[static_cast<std::size_t>(k - 1)] + (traj.row(k) - traj.row(k - 1)).norm();
    }
    const double total = cum.back();
    if (!(total > 0.0)) throw DegenerateTrajectory("zero arc length");
    DenseMatrix out(n, traj.cols());
    Index seg = 0;
    for (int i = 0; i < n; ++i) {
        const double s = (i == n - 1) ? total : total * i / (n - 1);
        while (seg + 1 < traj.rows() - 1 && cum[static_cast<std::size_t>(seg + 1)] < s) ++seg;
        const double a = cum[static_cast<std::size_t>(seg)];
        const double b = cum[static_cast<std::size_t>(seg + 1)];
        const double t = b > a ? std::clamp((s - a) / (b - a), 0.0, 1.0) : 0.0;
        out.row(i) = (1.0 - t) * traj.row(seg) + t * traj.row(seg + 1);
    }
    return out;
}

/// Initial-condition distribution and horizon for trajectory-based sampling.
struct TrajectoryPlan {
    int n_ic = 10;
    int k_trans = 0;
    double cutoff = 1e-3;
    InitSampler init;
};

inline TrajectoryPlan bioreactor_plan() {
    TrajectoryPlan p;
    p.n_ic = 10;
    p.k_trans = 8;
    p.init = [](CounterRng& rng) {
        Vector x(1);
        x(0) = rng.uniform(-1.0, 1.0);
        Vector y(1);
        y(0) = 4.3;
        return std::pair{x, y};
    };
    return p;
}

/// Headways h_i(0) ~ U[35, 45] with v_i = V(h_i); the last follower is 50 m
/// behind the leader; z(0) ~ U[-10, 10], v_l = 27.7.
inline TrajectoryPlan car_following_plan(const systems::CarFollowingParams& cf, const SystemModel& sys) {
    if (sys.N != 2 * cf.Nc) throw DimensionMismatch("car-following parameters do not match the system");
    TrajectoryPlan p;
    p.n_ic = 200;
    p.k_trans = 800;
    const Vector x0 = sys.x_offset;
    const Vector y0 = sys.y_offset;
    p.init = [cf, x0, y0](CounterRng& rng) {
        const int nc = cf.Nc;
        Vector xr(2 * nc);
        for (int i = 0; i < nc; ++i) xr(i) = rng.uniform(35.0, 45.0);
        xr(nc - 1) = 50.0;
        for (int i = 0; i < nc; ++i) xr(nc + i) = systems::optimal_velocity(cf, xr(i));
        Vector yr(2);
        yr(0) = rng.uniform(-10.0, 10.0);
        yr(1) = 27.7;
        return std::pair{Vector(xr - x0), Vector(yr - y0)};
    };
    return p;
}

/// Driver states y(0) uniform in [-1, 1]^M with x(0) = 0; used for systems
/// without a dedicated distribution.
inline TrajectoryPlan generic_plan(const SystemModel& sys) {
    TrajectoryPlan p;
    p.n_ic = 50;
    p.k_trans = 0;
    const int N = sys.N;
    const int M = sys.M;
    p.init = [N, M](CounterRng& rng) {
        Vector y(M);
        for (int m = 0; m < M; ++m) y(m) = rng.uniform(-1.0, 1.0);
        return std::pair{Vector(Vector::Zero(N)), y};
    };
    return p;
}

inline TrajectoryPlan default_plan(const SystemModel& sys, const systems::CarFollowingParams& cf = {}) {
    if (sys.label == "bioreactor") return bioreactor_plan();
    if (sys.label == "car_following") return car_following_plan(cf, sys);
    return generic_plan(sys);
}

namespace detail {

/// k distinct indices of [0, n) by partial Fisher-Yates.
inline std::vector<std::size_t> choose(std::size_t n, std::size_t k, CounterRng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
}

inline DenseMatrix uniform_box(const systems::Box& box, int Q, CounterRng& rng) {
    const int M = static_cast<int>(box.lo.size());
    DenseMatrix pts(Q, M);
    for (int q = 0; q < Q; ++q) {
        for (int m = 0; m < M; ++m) pts(q, m) = rng.uniform(box.lo[static_cast<std::size_t>(m)], box.hi[static_cast<std::size_t>(m)]);
    }
    return pts;
}

}  // namespace detail

/// Interior collocation points: M = 1 uniform on the domain; M >= 2 from
/// arc-length resampled trajectories filtered to the domain, adding batches of
/// trajectories while the pool is short. Boundary points only when r is given.
inline CollocationSet make_collocation(const SystemModel& sys, int Q, const Vector* r, const TrajectoryPlan& plan,
                                       std::uint64_t seed) {
    if (Q < 1) throw ConfigError("collocation count must be positive");
    CollocationSet cs;
    cs.seed = seed;
    CounterRng rng(seed);
    if (sys.M == 1) {
        CounterRng sub = rng.substream(0);
        cs.interior = detail::uniform_box(sys.domain, Q, sub);
        cs.provenance = Provenance::UniformGrid;
    } else {
        cs.provenance = Provenance::Trajectory;
        std::vector<double> pool;
        for (int attempt = 0; attempt < 8; ++attempt) {
            const auto batch = simulate_batch(sys, plan.n_ic, plan.init, plan.k_trans,
                                              rng.substream(1000 + static_cast<std::uint64_t>(attempt)), plan.cutoff);
            std::vector<double> lengths;
            double total = 0.0;
            for (const Trajectory& tr : batch) {
                double len = 0.0;
                for (std::size_t k = 1; k < tr.length(); ++k) {
                    double s = 0.0;
                    for (int m = 0; m < sys.M; ++m) {
                        const double d = tr.y[k * sys.M + m] - tr.y[(k - 1) * sys.M + m];
                        s += d * d;
                    }
                    len += std::sqrt(s);
                }
                lengths.push_back(len);
                total += len;
            }
            if (total > 0.0) {
                for (std::size_t t = 0; t < batch.size(); ++t) {
                    if (!(lengths[t] > 0.0) || batch[t].length() < 2) continue;
                    const int n_t = std::max(2, static_cast<int>(std::lround(2.0 * Q * lengths[t] / total)));
                    const DenseMatrix traj = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                        batch[t].y.data(), static_cast<Index>(batch[t].length()), sys.M);
                    const DenseMatrix pts = arc_length_resample(traj, n_t);
                    for (Index i = 0; i < pts.rows(); ++i) {
                        const Vector p = pts.row(i).transpose();
                        if (sys.domain.contains(p)) pool.insert(pool.end(), p.data(), p.data() + p.size());
                    }
                }
            }
            if (pool.size() >= static_cast<std::size_t>(Q) * static_cast<std::size_t>(sys.M)) break;
        }
        const std::size_t have = pool.size() / static_cast<std::size_t>(sys.M);
        if (have < static_cast<std::size_t>(Q)) {
            throw InsufficientSamples("trajectory pool holds " + std::to_string(have) + " points in the domain, need " +
                                      std::to_string(Q));
        }
        CounterRng pick = rng.substream(1);
        const auto idx = detail::choose(have, static_cast<std::size_t>(Q), pick);
        cs.interior.resize(Q, sys.M);
        for (int q = 0; q < Q; ++q) {
            for (int m = 0; m < sys.M; ++m) cs.interior(q, m) = pool[idx[static_cast<std::size_t>(q)] * sys.M + m];
        }
    }
    if (r) {
        cs.boundary = boundary_points(*r);
    } else {
        cs.boundary.resize(0, sys.M);
    }
    return cs;
}

/// S on-manifold pairs. With an exact map, y is uniform on the domain and
/// x = exact(y); otherwise S of the recorded post-transient states with y in
/// the domain are drawn without replacement.
inline TestSet build_test_set(const SystemModel& sys, int S, std::uint64_t seed, const TrajectoryPlan& plan,
                              const std::function<Vector(const Vector&)>* exact = nullptr) {
    if (S < 1) throw ConfigError("test set size must be positive");
    TestSet ts;
    ts.seed = seed;
    CounterRng rng(seed);
    if (exact) {
        ts.source = Provenance::ExactMap;
        CounterRng sub = rng.substream(0);
        ts.y = detail::uniform_box(sys.domain, S, sub);
        ts.x.resize(S, sys.N);
        for (int s = 0; s < S; ++s) ts.x.row(s) = (*exact)(ts.y.row(s).transpose()).transpose();
        return ts;
    }
    ts.source = Provenance::SimulatedTrajectories;
    const auto batch = simulate_batch(sys, plan.n_ic, plan.init, plan.k_trans, rng.substream(2000), plan.cutoff);
    std::vector<std::pair<std::size_t, std::size_t>> pool;
    for (std::size_t t = 0; t < batch.size(); ++t) {
        for (std::size_t k = 0; k < batch[t].length(); ++k) {
            const Vector y = Eigen::Map<const Vector>(batch[t].y.data() + k * sys.M, sys.M);
            if (sys.domain.contains(y)) pool.emplace_back(t, k);
        }
    }
    if (pool.size() < static_cast<std::size_t>(S)) {
        throw InsufficientSamples("recorded pool holds " + std::to_string(pool.size()) + " points, need " +
                                  std::to_string(S));
    }
    CounterRng pick = rng.substream(1);
    const auto idx = detail::choose(pool.size(), static_cast<std::size_t>(S), pick);
    ts.y.resize(S, sys.M);
    ts.x.resize(S, sys.N);
    for (int s = 0; s < S; ++s) {
        const auto [t, k] = pool[idx[static_cast<std::size_t>(s)]];
        for (int m = 0; m < sys.M; ++m) ts.y(s, m) = batch[t].y[k * sys.M + m];
        for (int n = 0; n < sys.N; ++n) ts.x(s, n) = batch[t].x[k * sys.N + n];
    }
    return ts;
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, sep)) out.push_back(tok);
    return out;
}

inline std::string header(const std::string& prefix, int count) {
    std::string h;
    for (int i = 1; i <= count; ++i) {
        if (!h.empty()) h += ',';
        h += prefix + "_" + std::to_string(i);
    }
    return h;
}

struct CsvTable {
    std::string provenance;
    std::uint64_t seed = 0;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ModelFormatError("cannot open " + path);
    CsvTable t;
    std::string line;
    if (!std::getline(in, line) || line.rfind("# ", 0) != 0) throw ModelFormatError(path + ": missing metadata line");
    for (const auto& kv : split(line.substr(2), ' ')) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = kv.substr(0, eq);
        const std::string val = kv.substr(eq + 1);
        if (key == "provenance") t.provenance = val;
        if (key == "seed") t.seed = std::stoull(val);
    }
    if (!std::getline(in, line)) throw ModelFormatError(path + ": missing header");
    t.columns = split(line, ',');
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        for (const auto& tok : split(line, ',')) row.push_back(std::stod(tok));
        if (row.size() != t.columns.size()) throw ModelFormatError(path + ": ragged row");
        t.rows.push_back(std::move(row));
    }
    return t;
}

inline int count_prefix(const std::vector<std::string>& cols, const std::string& prefix) {
    int c = 0;
    for (const auto& s : cols) {
        if (s.rfind(prefix + "_", 0) == 0) ++c;
    }
    return c;
}

}  // namespace detail

/// Collocation CSV: metadata line, header, interior rows then boundary rows
/// (column "kind" is 0 for interior, 1 for boundary).
inline void write_collocation_csv(const std::string& path, const CollocationSet& cs) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    const int M = static_cast<int>(cs.interior.cols());
    out << "# provenance=" << provenance_name(cs.provenance) << " seed=" << cs.seed << "\n";
    out << detail::header("y", M) << ",kind\n";
    auto dump = [&](const DenseMatrix& pts, int kind) {
        for (Index i = 0; i < pts.rows(); ++i) {
            for (int m = 0; m < M; ++m) out << detail::fmt17(pts(i, m)) << ',';
            out << kind << '\n';
        }
    };
    dump(cs.interior, 0);
    dump(cs.boundary, 1);
}

inline CollocationSet read_collocation_csv(const std::string& path) {
    const auto t = detail::read_csv(path);
    const int M = detail::count_prefix(t.columns, "y");
    if (M < 1 || t.columns.size() != static_cast<std::size_t>(M + 1)) throw ModelFormatError(path + ": bad header");
    CollocationSet cs;
    cs.provenance = provenance_from_name(t.provenance);
    cs.seed = t.seed;
    std::vector<const std::vector<double>*> in;
    std::vector<const std::vector<double>*> bd;
    for (const auto& row : t.rows) (row.back() == 0.0 ? in : bd).push_back(&row);
    cs.interior.resize(static_cast<Index>(in.size()), M);
    cs.boundary.resize(static_cast<Index>(bd.size()), M);
    for (std::size_t i = 0; i < in.size(); ++i) {
        for (int m = 0; m < M; ++m) cs.interior(static_cast<Index>(i), m) = (*in[i])[static_cast<std::size_t>(m)];
    }
    for (std::size_t i = 0; i < bd.size(); ++i) {
        for (int m = 0; m < M; ++m) cs.boundary(static_cast<Index>(i), m) = (*bd[i])[static_cast<std::size_t>(m)];
    }
    return cs;
}

inline void write_test_set_csv(const std::string& path, const TestSet& ts) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    const int M = static_cast<int>(ts.y.cols());
    const int N = static_cast<int>(ts.x.cols());
    out << "# provenance=" << provenance_name(ts.source) << " seed=" << ts.seed << "\n";
    out << detail::header("y", M) << ',' << detail::header("x", N) << "\n";
    for (Index s = 0; s < ts.size(); ++s) {
        for (int m = 0; m < M; ++m) out << detail::fmt17(ts.y(s, m)) << ',';
        for (int n = 0; n < N; ++n) out << detail::fmt17(ts.x(s, n)) << (n + 1 < N ? "," : "\n");
    }
}

inline TestSet read_test_set_csv(const std::string& path) {
    const auto t = detail::read_csv(path);
    const int M = detail::count_prefix(t.columns, "y");
    const int N = detail::count_prefix(t.columns, "x");
    if (M < 1 || N < 1 || t.columns.size() != static_cast<std::size_t>(M + N)) {
        throw ModelFormatError(path + ": bad header");
    }
    TestSet ts;
    ts.source = provenance_from_name(t.provenance);
    ts.seed = t.seed;
    const auto S = static_cast<Index>(t.rows.size());
    ts.y.resize(S, M);
    ts.x.resize(S, N);
    for (Index s = 0; s < S; ++s) {
        const auto& row = t.rows[static_cast<std::size_t>(s)];
        for (int m = 0; m < M; ++m) ts.y(s, m) = row[static_cast<std::size_t>(m)];
        for (int n = 0; n < N; ++n) ts.x(s, n) = row[static_cast<std::size_t>(M + n)];
    }
    return ts;
}

}  // namespace imhyb::sampling
