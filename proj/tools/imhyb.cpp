#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "imhyb/imhyb.hpp"

namespace fs = std::filesystem;
using namespace imhyb;
using json = io::json;

namespace {

struct Common {
    std::string config_path;
    std::string out_dir;
    unsigned threads = training::default_threads();
};

config::RunConfig load_config(const Common& c) {
    config::RunConfig rc;
    if (!c.config_path.empty()) rc = config::parse(io::read_json_file(c.config_path, false));
    if (!c.out_dir.empty()) rc.output_dir = c.out_dir;
    return rc;
}

fs::path prepare_out(const config::RunConfig& rc) {
    fs::path dir(rc.output_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create " + dir.string() + ": " + ec.message());
    return dir;
}

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream out(p);
    if (!out) throw ConfigError("cannot write " + p.string());
    out << s;
}

std::string trace_csv(const std::vector<LmTraceEntry>& tr) {
    std::string s = "iteration,lambda,loss,accepted\n";
    for (const auto& e : tr) {
        s += std::to_string(e.iteration) + "," + sampling::detail::fmt17(e.lambda) + "," +
             sampling::detail::fmt17(e.loss) + "," + (e.accepted ? "1" : "0") + "\n";
    }
    return s;
}

char idx_buf[16];
const char* idx(int i) {
    std::snprintf(idx_buf, sizeof idx_buf, "%03d", i);
    return idx_buf;
}

int cmd_check(const Common& c) {
    config::RunConfig rc = load_config(c);
    const auto sys = config::build_system(rc.system);
    const auto rep = systems::check_assumptions(sys, rc.check.d_max, rc.check.tol);
    const fs::path dir = prepare_out(rc);
    io::write_json_file((dir / "check.json").string(), io::assumption_json(rep));
    io::write_json_file((dir / "resolved_config.json").string(), config::to_json(config::resolve(rc, sys)));
    std::printf("%s: assumptions %s\n", sys.label.c_str(), rep.passed() ? "pass" : "FAIL");
    return rep.passed() ? 0 : 1;
}

int cmd_sample(const Common& c, bool with_test) {
    config::RunConfig rc = load_config(c);
    const auto sys = config::build_system(rc.system);
    const fs::path dir = prepare_out(rc);
    const auto cs = config::collocation_factory(rc, sys)(rc.sampling.seed);
    sampling::write_collocation_csv((dir / "collocation.csv").string(), cs);
    std::printf("collocation: %ld interior, %ld boundary points\n", static_cast<long>(cs.interior.rows()),
                static_cast<long>(cs.boundary.rows()));
    if (with_test) {
        const auto ts = config::test_set(rc, sys);
        sampling::write_test_set_csv((dir / "test_set.csv").string(), ts);
        std::printf("test set: %ld points\n", static_cast<long>(ts.size()));
    }
    io::write_json_file((dir / "resolved_config.json").string(), config::to_json(config::resolve(rc, sys)));
    return 0;
}

int cmd_train(const Common& c, bool force, bool trace) {
    config::RunConfig rc = load_config(c);
    const auto sys = config::build_system(rc.system);
    const auto check = systems::check_assumptions(sys, rc.check.d_max, rc.check.tol);
    if (!check.passed() && !force) {
        std::fprintf(stderr, "assumption check failed for %s (use --force to train anyway)\n", sys.label.c_str());
        return 1;
    }
    const fs::path dir = prepare_out(rc);
    io::write_json_file((dir / "resolved_config.json").string(), config::to_json(config::resolve(rc, sys)));

    if (rc.scheme.type == "pse") {
        const auto sol = pse_solve(sys, rc.scheme.h);
        io::save_model((dir / "model_pse.json").string(), Approximator(sol.as_poly()));
        json s;
        s["scheme"] = "pse";
        s["h"] = rc.scheme.h;
        s["order_residuals"] = sol.order_residuals;
        io::write_json_file((dir / "summary.json").string(), s);
        std::printf("pse h=%d written\n", rc.scheme.h);
        return 0;
    }

    const auto spec = config::scheme_spec(rc.scheme, sys.M);
    training::make_approximator(spec, sys.N, sys.M);
    const auto ens = training::train_ensemble(spec, sys, config::collocation_factory(rc, sys), rc.n_real, rc.lm,
                                              rc.sampling.seed, c.threads);
    fs::create_directories(dir / "models");
    fs::create_directories(dir / "reports");
    std::vector<double> losses;
    std::vector<double> times;
    json timing = json::array();
    int failed = 0;
    for (int i = 0; i < static_cast<int>(ens.size()); ++i) {
        const auto& o = ens[static_cast<std::size_t>(i)];
        const std::string tag = idx(i);
        io::write_json_file((dir / "reports" / ("report_" + tag + ".json")).string(), io::report_to_json(o.report));
        timing.push_back({{"realization", i}, {"wall_time_s", o.report.wall_time_s}});
        times.push_back(o.report.wall_time_s);
        if (!o.report.ok()) {
            ++failed;
            std::fprintf(stderr, "realization %d failed: %s\n", i, o.report.error.c_str());
            continue;
        }
        io::save_model((dir / "models" / ("model_" + tag + ".json")).string(), o.model);
        if (trace) write_text(dir / "reports" / ("trace_" + tag + ".csv"), trace_csv(o.trace));
        losses.push_back(o.report.final_loss);
        std::printf("realization %d: loss %.3e, %d iterations, %s\n", i, o.report.final_loss, o.report.iterations,
                    stop_reason_name(o.report.stop_reason));
    }
    json s;
    s["scheme"] = spec.descriptor();
    s["n_real"] = rc.n_real;
    s["failed"] = failed;
    if (!losses.empty()) s["loss"] = io::summary_json(evaluation::summarize(losses));
    io::write_json_file((dir / "summary.json").string(), s);
    json t;
    t["realizations"] = timing;
    t["wall_time_s"] = io::summary_json(evaluation::summarize(times));
    io::write_json_file((dir / "timing.json").string(), t);
    return failed == rc.n_real ? 1 : 0;
}

int cmd_evaluate(const Common& c, const std::vector<std::string>& models, const std::string& test_csv, bool dump) {
    config::RunConfig rc = load_config(c);
    const auto sys = config::build_system(rc.system);
    std::vector<Approximator> loaded;
    for (const auto& m : models) loaded.push_back(io::load_model(m));
    for (const auto& m : loaded) {
        if (m.N() != sys.N || m.M() != sys.M) throw ModelFormatError("model dimensions do not match the system");
    }
    const auto ts = test_csv.empty() ? config::test_set(rc, sys) : sampling::read_test_set_csv(test_csv);
    const fs::path dir = prepare_out(rc);
    json per = json::array();
    std::vector<evaluation::ErrorReport> reps;
    for (std::size_t i = 0; i < loaded.size(); ++i) {
        const auto rep = evaluation::error_report(loaded[i], ts);
        reps.push_back(rep);
        json e = io::error_report_json(rep);
        e["model"] = fs::path(models[i]).filename().string();
        per.push_back(e);
        if (dump) {
            std::string s = evaluation::pointwise_header(sys.M, sys.N) + "\n";
            for (const auto& r : evaluation::pointwise_dump(loaded[i], ts)) s += evaluation::pointwise_row(r) + "\n";
            write_text(dir / ("pointwise_" + std::string(idx(static_cast<int>(i))) + ".csv"), s);
        }
    }
    json j;
    j["test_set"] = {{"S", ts.size()}, {"seed", ts.seed}, {"source", sampling::provenance_name(ts.source)}};
    j["models"] = per;
    j["ensemble"] = io::ensemble_stats_json(evaluation::ensemble_stats(reps));
    io::write_json_file((dir / "evaluation.json").string(), j);
    const auto st = evaluation::ensemble_stats(reps);
    std::printf("%d model(s): L1 %.3e  L2 %.3e  Linf %.3e (means)\n", st.count, st.l1.mean, st.l2.mean,
                st.linf.mean);
    return 0;
}

int cmd_compare(const Common& c, const std::vector<std::string>& evals) {
    config::RunConfig rc = load_config(c);
    json rows = json::array();
    std::printf("%-40s %12s %12s %12s %6s\n", "evaluation", "L1", "L2", "Linf", "count");
    for (const auto& e : evals) {
        const json j = io::read_json_file(e, false);
        try {
            const json& en = j.at("ensemble");
            const double l1 = en.at("L1").at("mean").get<double>();
            const double l2 = en.at("L2").at("mean").get<double>();
            const double li = en.at("Linf").at("mean").get<double>();
            const int n = en.at("count").get<int>();
            std::printf("%-40s %12.4e %12.4e %12.4e %6d\n", e.c_str(), l1, l2, li, n);
            rows.push_back({{"evaluation", e}, {"L1", l1}, {"L2", l2}, {"Linf", li}, {"count", n}});
        } catch (const json::exception& ex) {
            throw ConfigError(e + ": not an evaluation file (" + ex.what() + ")");
        }
    }
    if (!rows.empty()) {
        const double base = rows[0]["L2"].get<double>();
        for (auto& r : rows) r["L2_ratio_to_first"] = r["L2"].get<double>() / base;
    }
    const fs::path dir = prepare_out(rc);
    io::write_json_file((dir / "compare.json").string(), rows);
    return 0;
}

int cmd_demo(const std::string& out_dir, int h, int Q, std::uint64_t seed) {
    const auto d = gaussian_regression_demo(h, Q, seed);
    fs::path dir(out_dir);
    fs::create_directories(dir);
    json j;
    j["h"] = h;
    j["Q"] = Q;
    j["seed"] = seed;
    j["mp_coeffs"] = io::vec_json(d.mp_coeffs);
    j["lm_coeffs"] = io::vec_json(d.lm_coeffs);
    j["mp_max_err"] = d.mp_max_err;
    j["lm_max_err"] = d.lm_max_err;
    j["mp_better"] = d.mp_max_err < d.lm_max_err;
    j["lm_iterations"] = d.lm.iterations;
    io::write_json_file((dir / ("regression_h" + std::to_string(h) + ".json")).string(), j);
    std::string s = "x,mp_abs_err,lm_abs_err\n";
    for (std::size_t i = 0; i < d.grid.size(); ++i) {
        s += sampling::detail::fmt17(d.grid[i]) + "," + sampling::detail::fmt17(d.mp_abs_err[i]) + "," +
             sampling::detail::fmt17(d.lm_abs_err[i]) + "\n";
    }
    write_text(dir / ("regression_h" + std::to_string(h) + "_grid.csv"), s);
    std::printf("h=%d: MP max err %.3e, LM max err %.3e\n", h, d.mp_max_err, d.lm_max_err);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Invariant-manifold approximation by polynomial, NN and hybrid schemes"};
    app.require_subcommand(1);
    Common common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", common.config_path, "JSON run configuration");
        sub->add_option("-o,--out", common.out_dir, "output directory (overrides output_dir)");
    };

    auto* check = app.add_subcommand("check", "check the existence assumptions of the configured system");
    add_common(check);

    bool with_test = false;
    auto* sample = app.add_subcommand("sample", "write the collocation set (and optionally the test set) as CSV");
    add_common(sample);
    sample->add_flag("--test-set", with_test, "also write test_set.csv");

    bool force = false;
    bool trace = false;
    auto* train = app.add_subcommand("train", "train an ensemble (or solve the PSE)");
    add_common(train);
    train->add_option("--threads", common.threads, "worker threads");
    train->add_flag("--force", force, "train even if the assumption check fails");
    train->add_flag("--trace", trace, "write per-iteration LM traces");

    std::vector<std::string> models;
    std::string test_csv;
    bool dump = false;
    auto* evaluate = app.add_subcommand("evaluate", "relative test errors of saved models");
    add_common(evaluate);
    evaluate->add_option("models", models, "model JSON files")->required();
    evaluate->add_option("--test-set", test_csv, "test-set CSV (default: generate from the config)");
    evaluate->add_flag("--dump", dump, "write pointwise relative errors as CSV");

    std::vector<std::string> evals;
    auto* compare = app.add_subcommand("compare", "tabulate several evaluation.json files");
    add_common(compare);
    compare->add_option("evaluations", evals, "evaluation JSON files")->required();

    int h = 20;
    int Q = 200;
    std::uint64_t seed = 0;
    std::string demo_out = "out";
    auto* demo = app.add_subcommand("demo-regression", "pseudo-inverse vs LM fit of a Gaussian profile");
    demo->add_option("--degree", h, "polynomial degree");
    demo->add_option("--samples", Q, "number of samples");
    demo->add_option("--seed", seed, "sample seed");
    demo->add_option("-o,--out", demo_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*check) return cmd_check(common);
        if (*sample) return cmd_sample(common, with_test);
        if (*train) return cmd_train(common, force, trace);
        if (*evaluate) return cmd_evaluate(common, models, test_csv, dump);
        if (*compare) return cmd_compare(common, evals);
        if (*demo) return cmd_demo(demo_out, h, Q, seed);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    } catch (const ModelFormatError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    } catch (const Error& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 1;
    } catch (const std::filesystem::filesystem_error& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    }
    return 2;
}
