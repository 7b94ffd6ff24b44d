#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "imhyb/approximators.hpp"
#include "imhyb/errors.hpp"
#include "imhyb/lm.hpp"
#include "imhyb/sampling.hpp"
#include "imhyb/systems.hpp"
#include "imhyb/training.hpp"

namespace imhyb::config {

using json = nlohmann::ordered_json;

struct SystemConfig {
    std::string name = "bioreactor";
    systems::BioreactorParams bio;
    systems::CarFollowingParams cf;
    double beta = -0.4;
};

struct SchemeConfig {
    std::string type = "hybrid";  // pse | poly | nn | hybrid
    int h = 10;
    Family family = Family::Power;
    int L = 10;
    std::vector<double> r{1.0};
    training::InitKind init = training::InitKind::Parsimonious;
};

struct SamplingConfig {
    std::optional<int> Q;
    int S = 10000;
    std::optional<int> n_ic;
    std::optional<int> k_trans;
    double cutoff = 1e-3;
    std::uint64_t seed = 1;
    std::uint64_t test_seed = 2;
};

struct CheckConfig {
    int d_max = 50;
    double tol = 1e-10;
};

struct RunConfig {
    SystemConfig system;
    SchemeConfig scheme;
    SamplingConfig sampling;
    LmConfig lm;
    int n_real = 1;
    CheckConfig check;
    std::string output_dir = "out";
};

namespace detail {

inline void only_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!allowed.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
}

template <class T>
void get(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        const json& v = j.at(key);
        if constexpr (std::is_same_v<T, int> || std::is_same_v<T, std::uint64_t>) {
            if (!v.is_number_integer()) throw ConfigError(where + "." + key + " must be an integer");
            if constexpr (std::is_same_v<T, std::uint64_t>) {
                if (v.is_number_unsigned()) {
                    out = v.get<std::uint64_t>();
                } else if (v.get<std::int64_t>() >= 0) {
                    out = static_cast<std::uint64_t>(v.get<std::int64_t>());
                } else {
                    throw ConfigError(where + "." + key + " must be non-negative");
                }
            } else {
                out = v.get<int>();
            }
        } else if constexpr (std::is_same_v<T, double>) {
            if (!v.is_number()) throw ConfigError(where + "." + key + " must be a number");
            out = v.get<double>();
        } else {
            out = v.get<T>();
        }
    } catch (const json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

template <class T>
void get_opt(const json& j, const char* key, std::optional<T>& out, const std::string& where) {
    if (!j.contains(key) || j.at(key).is_null()) return;
    T v{};
    get(j, key, v, where);
    out = v;
}

}  // namespace detail

/// Strict parse: unknown keys and wrongly typed values raise ConfigError.
inline RunConfig parse(const json& j) {
    using detail::get;
    RunConfig c;
    detail::only_keys(j, "config", {"system", "scheme", "sampling", "lm", "ensemble", "check", "output_dir"});
    if (j.contains("system")) {
        const json& s = j.at("system");
        if (!s.is_object() || !s.contains("name") || !s.at("name").is_string()) {
            throw ConfigError("system.name is required");
        }
        c.system.name = s.at("name").get<std::string>();
        if (c.system.name == "bioreactor") {
            detail::only_keys(s, "system", {"name", "k1", "k2", "kd1", "vr", "S0", "delta"});
            auto& p = c.system.bio;
            get(s, "k1", p.k1, "system");
            get(s, "k2", p.k2, "system");
            get(s, "kd1", p.kd1, "system");
            get(s, "vr", p.vr, "system");
            get(s, "S0", p.S0, "system");
            get(s, "delta", p.delta, "system");
        } else if (c.system.name == "car_following") {
            detail::only_keys(s, "system", {"name", "Nc", "tau", "gamma", "beta", "v0", "tau_l", "mu", "v_des", "delta"});
            auto& p = c.system.cf;
            get(s, "Nc", p.Nc, "system");
            get(s, "tau", p.tau, "system");
            get(s, "gamma", p.gamma, "system");
            get(s, "beta", p.beta, "system");
            get(s, "v0", p.v0, "system");
            get(s, "tau_l", p.tau_l, "system");
            get(s, "mu", p.mu, "system");
            if (s.contains("v_des") && !s.at("v_des").is_null()) get(s, "v_des", p.v_des, "system");
            get(s, "delta", p.delta, "system");
            if (p.Nc < 1) throw ConfigError("system.Nc must be >= 1");
        } else if (c.system.name == "ln_example") {
            detail::only_keys(s, "system", {"name", "beta"});
            get(s, "beta", c.system.beta, "system");
        } else {
            throw ConfigError("unknown system '" + c.system.name + "'");
        }
    }
    if (j.contains("scheme")) {
        const json& s = j.at("scheme");
        detail::only_keys(s, "scheme", {"type", "h", "family", "L", "r", "init"});
        get(s, "type", c.scheme.type, "scheme");
        if (c.scheme.type != "pse" && c.scheme.type != "poly" && c.scheme.type != "nn" && c.scheme.type != "hybrid") {
            throw ConfigError("unknown scheme type '" + c.scheme.type + "'");
        }
        get(s, "h", c.scheme.h, "scheme");
        get(s, "L", c.scheme.L, "scheme");
        if (s.contains("family")) {
            if (!s.at("family").is_string()) throw ConfigError("scheme.family must be a string");
            c.scheme.family = family_from_name(s.at("family").get<std::string>());
        }
        if (s.contains("r")) {
            const json& r = s.at("r");
            c.scheme.r.clear();
            if (r.is_number()) {
                c.scheme.r.push_back(r.get<double>());
            } else if (r.is_array()) {
                for (const auto& v : r) {
                    if (!v.is_number()) throw ConfigError("scheme.r entries must be numbers");
                    c.scheme.r.push_back(v.get<double>());
                }
            } else {
                throw ConfigError("scheme.r must be a number or an array");
            }
        }
        if (s.contains("init")) {
            if (!s.at("init").is_string()) throw ConfigError("scheme.init must be a string");
            c.scheme.init = training::init_from_name(s.at("init").get<std::string>());
        }
        if (c.scheme.h < 0) throw ConfigError("scheme.h must be >= 0");
        if (c.scheme.L < 1) throw ConfigError("scheme.L must be >= 1");
        if (c.scheme.type == "pse" && c.scheme.family != Family::Power) {
            throw ConfigError("pse scheme uses the power family");
        }
        if (c.scheme.type == "hybrid") {
            for (double r : c.scheme.r) {
                if (!(r > 0.0)) throw ConfigError("scheme.r components must be positive");
                if (c.scheme.family != Family::Power && r > 1.0) {
                    throw ConfigError(std::string(family_name(c.scheme.family)) + " hybrid requires r_m <= 1");
                }
            }
        }
    }
    if (j.contains("sampling")) {
        const json& s = j.at("sampling");
        detail::only_keys(s, "sampling", {"Q", "S", "n_ic", "k_trans", "cutoff", "seed", "test_seed"});
        detail::get_opt(s, "Q", c.sampling.Q, "sampling");
        get(s, "S", c.sampling.S, "sampling");
        detail::get_opt(s, "n_ic", c.sampling.n_ic, "sampling");
        detail::get_opt(s, "k_trans", c.sampling.k_trans, "sampling");
        get(s, "cutoff", c.sampling.cutoff, "sampling");
        get(s, "seed", c.sampling.seed, "sampling");
        get(s, "test_seed", c.sampling.test_seed, "sampling");
        if (c.sampling.Q && *c.sampling.Q < 1) throw ConfigError("sampling.Q must be >= 1");
        if (c.sampling.S < 1) throw ConfigError("sampling.S must be >= 1");
        if (c.sampling.n_ic && *c.sampling.n_ic < 1) throw ConfigError("sampling.n_ic must be >= 1");
        if (c.sampling.k_trans && *c.sampling.k_trans < 0) throw ConfigError("sampling.k_trans must be >= 0");
        if (!(c.sampling.cutoff > 0.0)) throw ConfigError("sampling.cutoff must be positive");
    }
    if (j.contains("lm")) {
        const json& s = j.at("lm");
        detail::only_keys(s, "lm", {"lambda0", "tol_F", "tol_R", "k_max"});
        get(s, "lambda0", c.lm.lambda0, "lm");
        get(s, "tol_F", c.lm.tol_F, "lm");
        get(s, "tol_R", c.lm.tol_R, "lm");
        get(s, "k_max", c.lm.k_max, "lm");
        c.lm.validate();
    }
    if (j.contains("ensemble")) {
        const json& s = j.at("ensemble");
        detail::only_keys(s, "ensemble", {"n_real"});
        get(s, "n_real", c.n_real, "ensemble");
        if (c.n_real < 1) throw ConfigError("ensemble.n_real must be >= 1");
    }
    if (j.contains("check")) {
        const json& s = j.at("check");
        detail::only_keys(s, "check", {"d_max", "tol"});
        get(s, "d_max", c.check.d_max, "check");
        get(s, "tol", c.check.tol, "check");
        if (c.check.d_max < 1) throw ConfigError("check.d_max must be >= 1");
        if (!(c.check.tol > 0.0)) throw ConfigError("check.tol must be positive");
    }
    if (j.contains("output_dir")) {
        if (!j.at("output_dir").is_string()) throw ConfigError("output_dir must be a string");
        c.output_dir = j.at("output_dir").get<std::string>();
    }
    return c;
}

inline json to_json(const RunConfig& c) {
    json j;
    json s;
    s["name"] = c.system.name;
    if (c.system.name == "bioreactor") {
        const auto& p = c.system.bio;
        s["k1"] = p.k1;
        s["k2"] = p.k2;
        s["kd1"] = p.kd1;
        s["vr"] = p.vr;
        s["S0"] = p.S0;
        s["delta"] = p.delta;
    } else if (c.system.name == "car_following") {
        const auto& p = c.system.cf;
        s["Nc"] = p.Nc;
        s["tau"] = p.tau;
        s["gamma"] = p.gamma;
        s["beta"] = p.beta;
        s["v0"] = p.v0;
        s["tau_l"] = p.tau_l;
        s["mu"] = p.mu;
        s["v_des"] = std::isnan(p.v_des) ? json(nullptr) : json(p.v_des);
        s["delta"] = p.delta;
    } else {
        s["beta"] = c.system.beta;
    }
    j["system"] = s;
    json r = json::array();
    for (double v : c.scheme.r) r.push_back(v);
    j["scheme"] = {{"type", c.scheme.type}, {"h", c.scheme.h},        {"family", family_name(c.scheme.family)},
                   {"L", c.scheme.L},       {"r", r},                 {"init", training::init_name(c.scheme.init)}};
    auto opt = [](const std::optional<int>& v) { return v ? json(*v) : json(nullptr); };
    j["sampling"] = {{"Q", opt(c.sampling.Q)},         {"S", c.sampling.S},       {"n_ic", opt(c.sampling.n_ic)},
                     {"k_trans", opt(c.sampling.k_trans)}, {"cutoff", c.sampling.cutoff}, {"seed", c.sampling.seed},
                     {"test_seed", c.sampling.test_seed}};
    j["lm"] = {{"lambda0", c.lm.lambda0}, {"tol_F", c.lm.tol_F}, {"tol_R", c.lm.tol_R}, {"k_max", c.lm.k_max}};
    j["ensemble"] = {{"n_real", c.n_real}};
    j["check"] = {{"d_max", c.check.d_max}, {"tol", c.check.tol}};
    j["output_dir"] = c.output_dir;
    return j;
}

inline systems::SystemModel build_system(const SystemConfig& s) {
    if (s.name == "bioreactor") return systems::bioreactor(s.bio);
    if (s.name == "car_following") return systems::car_following(s.cf);
    if (s.name == "ln_example") return systems::ln_example(s.beta);
    throw ConfigError("unknown system '" + s.name + "'");
}

/// Gate radius of length M; a single value is broadcast.
inline Vector radius(const SchemeConfig& s, int M) {
    if (s.r.size() == 1) return Vector::Constant(M, s.r[0]);
    if (static_cast<int>(s.r.size()) != M) throw ConfigError("scheme.r must have 1 or M entries");
    return Eigen::Map<const Vector>(s.r.data(), M);
}

inline training::SchemeSpec scheme_spec(const SchemeConfig& s, int M) {
    training::SchemeSpec spec;
    if (s.type == "poly") {
        spec.kind = SchemeKind::Poly;
    } else if (s.type == "nn") {
        spec.kind = SchemeKind::NN;
    } else if (s.type == "hybrid") {
        spec.kind = SchemeKind::Hybrid;
    } else {
        throw ConfigError("scheme type '" + s.type + "' is not trainable");
    }
    spec.family = s.family;
    spec.h = s.h;
    spec.L = s.L;
    spec.init = s.init;
    if (spec.kind == SchemeKind::Hybrid) spec.r = radius(s, M);
    return spec;
}

/// Trajectory plan with config overrides applied.
inline sampling::TrajectoryPlan plan(const RunConfig& c, const systems::SystemModel& sys) {
    sampling::TrajectoryPlan p = sampling::default_plan(sys, c.system.cf);
    if (c.sampling.n_ic) p.n_ic = *c.sampling.n_ic;
    if (c.sampling.k_trans) p.k_trans = *c.sampling.k_trans;
    p.cutoff = c.sampling.cutoff;
    return p;
}

/// Fills the data-dependent defaults (Q, n_ic, k_trans, v_des) for emission.
inline RunConfig resolve(RunConfig c, const systems::SystemModel& sys) {
    if (!c.sampling.Q) c.sampling.Q = sampling::collocation_count(sys.N, sys.M, c.scheme.L);
    const auto p = plan(c, sys);
    c.sampling.n_ic = p.n_ic;
    c.sampling.k_trans = p.k_trans;
    if (c.system.name == "car_following" && std::isnan(c.system.cf.v_des)) {
        c.system.cf.v_des = c.system.cf.desired_velocity();
    }
    return c;
}

/// Exact manifold map when one is known (ln example only).
inline std::optional<std::function<Vector(const Vector&)>> exact_map(const RunConfig& c) {
    if (c.system.name != "ln_example") return std::nullopt;
    return std::function<Vector(const Vector&)>([](const Vector& y) {
        Vector x(1);
        x(0) = systems::ln_exact_map(y(0));
        return x;
    });
}

inline sampling::TestSet test_set(const RunConfig& c, const systems::SystemModel& sys) {
    const auto ex = exact_map(c);
    return sampling::build_test_set(sys, c.sampling.S, c.sampling.test_seed, plan(c, sys), ex ? &*ex : nullptr);
}

/// Collocation draw for one realization; Q defaults to the 20x rule.
inline training::CollocationFactory collocation_factory(const RunConfig& c, const systems::SystemModel& sys) {
    const int Q = c.sampling.Q ? *c.sampling.Q : sampling::collocation_count(sys.N, sys.M, c.scheme.L);
    const std::optional<Vector> r =
        c.scheme.type == "hybrid" ? std::optional<Vector>(radius(c.scheme, sys.M)) : std::nullopt;
    const sampling::TrajectoryPlan p = plan(c, sys);
    return [&sys, Q, r, p](std::uint64_t seed) { return sampling::make_collocation(sys, Q, r ? &*r : nullptr, p, seed); };
}

}  // namespace imhyb::config
