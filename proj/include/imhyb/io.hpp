#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "imhyb/approximators.hpp"
#include "imhyb/errors.hpp"
#include "imhyb/evaluation.hpp"
#include "imhyb/lm.hpp"
#include "imhyb/pse.hpp"
#include "imhyb/systems.hpp"
#include "imhyb/training.hpp"

namespace imhyb::io {

using json = nlohmann::ordered_json;

inline json vec_json(const Vector& v) {
    json a = json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

inline Vector json_vec(const json& a, const std::string& what) {
    if (!a.is_array()) throw ModelFormatError(what + " must be an array");
    Vector v(static_cast<Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!a[i].is_number()) throw ModelFormatError(what + " entries must be numbers");
        v(static_cast<Index>(i)) = a[i].get<double>();
    }
    return v;
}

/// {format, scheme, family, h, L, r, N, M, nu}; nu = [a_1, p_1, ..., a_N, p_N].
inline json model_to_json(const Approximator& m) {
    json j;
    j["format"] = "imhyb-model";
    j["version"] = 1;
    j["scheme"] = scheme_name(m.kind());
    if (const PolyParams* p = m.poly()) {
        j["family"] = family_name(p->family);
        j["h"] = p->h();
    }
    if (const NnParams* n = m.nn()) j["L"] = n->L;
    if (const HybridModel* h = m.hybrid()) j["r"] = vec_json(h->r);
    j["N"] = m.N();
    j["M"] = m.M();
    j["nu"] = vec_json(m.pack());
    return j;
}

inline Approximator model_from_json(const json& j) {
    try {
        if (!j.is_object() || j.value("format", "") != "imhyb-model") throw ModelFormatError("not an imhyb model");
        const std::string scheme = j.at("scheme").get<std::string>();
        const int N = j.at("N").get<int>();
        const int M = j.at("M").get<int>();
        if (N < 1 || M < 1) throw ModelFormatError("N and M must be positive");
        training::SchemeSpec spec;
        if (scheme == "poly") {
            spec.kind = SchemeKind::Poly;
        } else if (scheme == "nn") {
            spec.kind = SchemeKind::NN;
        } else if (scheme == "hybrid") {
            spec.kind = SchemeKind::Hybrid;
        } else {
            throw ModelFormatError("unknown scheme '" + scheme + "'");
        }
        if (spec.kind != SchemeKind::NN) {
            spec.family = family_from_name(j.at("family").get<std::string>());
            spec.h = j.at("h").get<int>();
        }
        if (spec.kind != SchemeKind::Poly) spec.L = j.at("L").get<int>();
        if (spec.kind == SchemeKind::Hybrid) spec.r = json_vec(j.at("r"), "r");
        Approximator m = training::make_approximator(spec, N, M);
        m.unpack(json_vec(j.at("nu"), "nu"));
        return m;
    } catch (const json::exception& e) {
        throw ModelFormatError(e.what());
    } catch (const ConfigError& e) {
        throw ModelFormatError(e.what());
    } catch (const DimensionMismatch& e) {
        throw ModelFormatError(e.what());
    }
}

inline json read_json_file(const std::string& path, bool model_file) {
    std::ifstream in(path);
    if (!in) {
        if (model_file) throw ModelFormatError("cannot open " + path);
        throw ConfigError("cannot open " + path);
    }
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        if (model_file) throw ModelFormatError(path + ": " + e.what());
        throw ConfigError(path + ": " + e.what());
    }
}

inline void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    out << j.dump(2) << "\n";
}

inline Approximator load_model(const std::string& path) { return model_from_json(read_json_file(path, true)); }

inline void save_model(const std::string& path, const Approximator& m) { write_json_file(path, model_to_json(m)); }

/// Wall time is left out so that reports are reproducible; it goes to a
/// separate timing file.
inline json report_to_json(const training::TrainReport& r) {
    json j;
    j["scheme"] = r.scheme;
    j["seed"] = r.seed;
    j["final_loss"] = r.final_loss;
    j["iterations"] = r.iterations;
    j["stop_reason"] = stop_reason_name(r.stop_reason);
    j["weights"] = {{"interior", r.weights.interior},
                    {"equilibrium", r.weights.equilibrium},
                    {"boundary", r.weights.boundary}};
    j["error"] = r.error;
    return j;
}

inline json norms_json(const evaluation::Norms& n) { return {{"L1", n.l1}, {"L2", n.l2}, {"Linf", n.linf}}; }

inline json error_report_json(const evaluation::ErrorReport& r) {
    json j;
    json comps = json::array();
    for (const auto& c : r.per_component) comps.push_back(norms_json(c));
    j["per_component"] = comps;
    j["component_mean"] = norms_json(r.component_mean);
    return j;
}

inline json summary_json(const evaluation::Summary& s) { return {{"mean", s.mean}, {"p5", s.p5}, {"p95", s.p95}}; }

inline json ensemble_stats_json(const evaluation::EnsembleStats& s) {
    return {{"count", s.count}, {"L1", summary_json(s.l1)}, {"L2", summary_json(s.l2)}, {"Linf", summary_json(s.linf)}};
}

inline json assumption_json(const systems::AssumptionReport& r) {
    auto spec = [](const std::vector<std::complex<double>>& ev) {
        json a = json::array();
        for (const auto& z : ev) a.push_back({{"re", z.real()}, {"im", z.imag()}, {"abs", std::abs(z)}});
        return a;
    };
    json j;
    j["passed"] = r.passed();
    j["eig_A"] = spec(r.eig_A);
    j["eig_B"] = spec(r.eig_B);
    j["all_inside_or_outside_unit_disc"] = r.all_inside_or_outside_unit_disc;
    j["nonzero_eigs"] = r.nonzero_eigs;
    if (r.resonance_found) {
        j["resonance_found"] = {{"d", r.resonance_found->d},
                                {"j", r.resonance_found->j},
                                {"distance", r.resonance_found->distance}};
    } else {
        j["resonance_found"] = nullptr;
    }
    j["d_max_checked"] = r.d_max_checked;
    j["tol"] = r.tol;
    return j;
}

}  // namespace imhyb::io
