// Command-line front end: sampling, Gram spectra, closed-form modes,
// training runs, spectral predictions, and figure reproductions.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "ntkspec/analytic.hpp"
#include "ntkspec/experiments.hpp"
#include "ntkspec/netio.hpp"

using namespace ntkspec;
using nlohmann::json;

namespace {

json parse_json_arg(const std::string& arg) {
    if (!arg.empty() && arg.front() == '{') return json::parse(arg);
    std::ifstream f(arg);
    if (!f) throw config_error("cannot open config file: " + arg);
    return json::parse(f);
}

ResultTable sample_table(const json& dj, std::size_t n, std::uint64_t seed) {
    const std::string kind = dj.value("kind", "uniform");
    if (kind == "hemisphere") {
        auto d = hemisphere_from_json(dj);
        auto pts = sample(d, n, seed);
        ResultTable t("samples", {"x", "y", "z", "region", "weight"});
        for (const auto& p : pts)
            t.add_row({p.x[0], p.x[1], p.x[2], static_cast<double>(p.region), 1.0});
        return t;
    }
    ResultTable t("samples", {"angle_or_xyz", "region", "weight"});
    if (kind == "continuous_cosine") {
        auto d = ContinuousDensity1D::cosine_profile();
        for (const auto& p : sample(d, n, seed))
            t.add_row({p.angle, static_cast<double>(p.region), 1.0});
    } else {
        auto d = density1d_from_json(dj);
        for (const auto& p : sample(d, n, seed))
            t.add_row({p.angle, static_cast<double>(p.region), 1.0});
    }
    return t;
}

int dispatch(CLI::App& app, int argc, char** argv) {
    std::string density_arg = R"({"kind":"uniform"})";
    std::string kernel_arg = R"({"kind":"two_layer"})";
    std::string config_path;
    std::string out_dir = "results";
    std::uint64_t seed = 1;
    bool paper_scale = false;
    unsigned threads = 1;
    std::size_t n = 1000, top = 16;
    int qmax = 8;
    bool dense_eval = false;
    bool dump_matrix = false;
    bool dry_run = false;
    std::string fig_id;
    std::string save_net_path;

    app.add_option("--seed", seed, "global RNG seed");
    app.add_option("--out", out_dir, "output directory");
    app.add_flag("--paper-scale", paper_scale, "use the paper's sample sizes where memory allows");
    app.add_option("--threads", threads, "worker threads for Gram assembly");

    auto* c_sample = app.add_subcommand("sample", "draw points from a density");
    c_sample->add_option("--density", density_arg, "density JSON (inline or file)");
    c_sample->add_option("--n", n, "number of points");

    auto* c_gram = app.add_subcommand("gram", "assemble a kernel Gram matrix; writes the kernel profile");
    c_gram->add_option("--density", density_arg, "density JSON");
    c_gram->add_option("--kernel", kernel_arg, "kernel JSON");
    c_gram->add_option("--n", n, "number of points");
    c_gram->add_flag("--matrix", dump_matrix, "also dump the full matrix (n <= 2048)");

    auto* c_eig = app.add_subcommand("eigsys", "spectrum and leading eigenvectors of a sampled Gram matrix");
    c_eig->add_option("--density", density_arg, "density JSON");
    c_eig->add_option("--kernel", kernel_arg, "kernel JSON");
    c_eig->add_option("--n", n, "number of points");
    c_eig->add_option("--top", top, "eigenpairs to extract");

    auto* c_modes = app.add_subcommand("modes", "closed-form eigenmodes for a piecewise density");
    c_modes->add_option("--density", density_arg, "density JSON");
    c_modes->add_option("--qmax", qmax, "largest mode index");
    c_modes->add_flag("--dense", dense_eval, "also write dense evaluations x,f(x)");

    auto* c_train = app.add_subcommand("train", "train a finite-width network from a config file");
    c_train->add_option("config", config_path, "training config JSON")->required();
    c_train->add_option("--save-net", save_net_path, "write a binary checkpoint");

    auto* c_predict = app.add_subcommand("predict", "train and compare against the spectral law");
    c_predict->add_option("config", config_path, "prediction config JSON");

    auto* c_repro = app.add_subcommand("reproduce", "run a figure reproduction");
    c_repro->add_option("figure", fig_id, "experiment id (fig1..fig12, custom)")->required();
    c_repro->add_option("config", config_path, "optional config JSON with overrides");
    c_repro->add_flag("--dry-run", dry_run, "validate the config and print the plan only");

    auto* c_list = app.add_subcommand("list", "catalog of experiments");

    app.require_subcommand(1);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    if (c_list->parsed()) {
        for (const auto& e : list_experiments())
            std::cout << e.id << "  [" << e.figure << "]  " << e.description
                      << "  (runtime " << e.runtime << ", memory " << e.memory << ")\n";
        return 0;
    }

    if (c_sample->parsed()) {
        ResultTable t = sample_table(parse_json_arg(density_arg), n, seed);
        t.set_provenance(density_arg, seed);
        t.write(out_dir);
        std::cout << "wrote " << (std::filesystem::path(out_dir) / "samples.csv").string() << "\n";
        return 0;
    }

    if (c_gram->parsed()) {
        KernelSpec spec = kernel_from_json(parse_json_arg(kernel_arg));
        std::vector<double> prof = kernel_profile(spec, 1024);
        ResultTable t("kernel_profile", {"theta", "value"});
        t.set_provenance(kernel_arg, seed);
        for (std::size_t j = 0; j < prof.size(); ++j)
            t.add_row({kTwoPi * static_cast<double>(j) / static_cast<double>(prof.size()) - kPi,
                       prof[j]});
        t.write(out_dir);
        auto pts = sample(density1d_from_json(parse_json_arg(density_arg)), n, seed);
        auto angles = angles_of(pts);
        GramMatrix g = assemble_gram(angles, spec, kDefaultGramBudgetBytes, threads);
        std::cout << "assembled " << g.n << "x" << g.n << " Gram matrix, diag " << g.at(0, 0)
                  << "\n";
        if (dump_matrix) {
            if (g.n > 2048) throw budget_error("gram --matrix limited to n <= 2048");
            ResultTable gm("gram_matrix", [&] {
                std::vector<std::string> cols;
                for (std::size_t j = 0; j < g.n; ++j) cols.push_back("c" + std::to_string(j));
                return cols;
            }());
            gm.set_provenance(kernel_arg, seed);
            for (std::size_t i = 0; i < g.n; ++i) {
                std::vector<double> row(g.n);
                for (std::size_t j = 0; j < g.n; ++j) row[j] = g.at(i, j);
                gm.add_row(row);
            }
            gm.write(out_dir);
        }
        return 0;
    }

    if (c_eig->parsed()) {
        json cfg = {{"experiment", "custom"},     {"seed", seed},  {"out", out_dir},
                    {"density", parse_json_arg(density_arg)}, {"kernel", parse_json_arg(kernel_arg)},
                    {"n", n},                     {"top_k", top}};
        run_experiment(ExperimentConfig::from_json(cfg));
        std::cout << "wrote custom_spectrum.csv and custom_eigenvectors.csv under " << out_dir
                  << "\n";
        return 0;
    }

    if (c_modes->parsed()) {
        PiecewiseDensity1D d = density1d_from_json(parse_json_arg(density_arg));
        ResultTable t("modes", {"q", "lambda", "region", "amplitude", "phase"});
        t.set_provenance(density_arg, seed);
        ResultTable dense("mode_values", {"q", "x", "f"});
        dense.set_provenance(density_arg, seed);
        int built = 0;
        for (int q = 0; q <= qmax; ++q) {
            ModeBuildResult r = build_eigenfunctions(d, q);
            if (!r.quantized) {
                std::cout << "q=" << q << ": no periodic mode (monodromy trace "
                          << r.monodromy_trace << ")\n";
                continue;
            }
            for (const auto& m : r.modes) {
                ++built;
                for (std::size_t j = 0; j < d.regions(); ++j)
                    t.add_row({static_cast<double>(q), m.lambda, static_cast<double>(j),
                               m.amplitude[j], m.phase[j]});
                if (dense_eval)
                    for (int i = 0; i < 512; ++i) {
                        double x = -kPi + kTwoPi * (i + 0.5) / 512.0;
                        dense.add_row({static_cast<double>(q), x, m.eval(x)});
                    }
            }
        }
        t.write(out_dir);
        if (dense_eval) dense.write(out_dir);
        std::cout << "built " << built << " modes\n";
        return 0;
    }

    if (c_train->parsed()) {
        json cfg = parse_json_arg(config_path);
        if (!cfg.contains("seed")) cfg["seed"] = seed;
        PiecewiseDensity1D d = cfg.contains("density") ? density1d_from_json(cfg.at("density"))
                                                       : PiecewiseDensity1D::uniform();
        TargetSpec target = target_from_json(cfg.at("target"));
        std::size_t nn = cfg.value("n", 256);
        auto pts = sample(d, nn, cfg.at("seed").get<std::uint64_t>());
        Dataset ds = Dataset::from_angles(pts, target, d.regions());
        TrainConfig tc;
        tc.eta = cfg.value("eta", 0.004);
        tc.batch = cfg.value("batch", 0);
        tc.max_iters = cfg.value("max_iters", 10000L);
        tc.delta = cfg.value("delta", 0.05);
        tc.record_every = cfg.value("record_every", 10L);
        tc.mean_loss = cfg.value("mean_loss", false);
        tc.record_residual = true;
        tc.seed = cfg.at("seed").get<std::uint64_t>();
        TrainingTrace trace;
        std::uint64_t net_seed = cfg.value("net_seed", tc.seed);
        if (cfg.value("net", "two_layer") == "deep") {
            DeepNet net = init_deep(cfg.value("depth", 3), cfg.value("m", 256), 2,
                                    cfg.value("tau", 1.0), net_seed);
            trace = train(net, ds, tc);
            if (!save_net_path.empty()) save_net(net, save_net_path, net_seed);
        } else {
            TwoLayerNet net = init_two_layer(cfg.value("m", 1000), 2, cfg.value("tau", 0.2),
                                             net_seed);
            trace = train(net, ds, tc);
            if (!save_net_path.empty()) save_net(net, save_net_path, net_seed);
        }
        std::vector<std::string> cols = {"iter", "loss"};
        for (std::size_t j = 0; j < d.regions(); ++j)
            cols.push_back("region_" + std::to_string(j) + "_mse");
        cols.push_back("residual_norm");
        ResultTable t("trace", cols);
        t.set_provenance(cfg.dump(), tc.seed);
        for (std::size_t r = 0; r < trace.iters.size(); ++r) {
            std::vector<double> row = {static_cast<double>(trace.iters[r]), trace.loss[r]};
            for (double e : trace.region_err[r]) row.push_back(e);
            row.push_back(trace.residual_norm[r]);
            t.add_row(row);
        }
        t.write(out_dir);
        if (trace.diverged) {
            std::cerr << "training diverged\n";
            return 3;
        }
        std::cout << "trace written (" << trace.iters.size() << " records, "
                  << trace.total_iters << " iterations)\n";
        return 0;
    }

    if (c_predict->parsed()) {
        json cfg = config_path.empty() ? json{{"experiment", "predict"}, {"seed", seed}}
                                       : parse_json_arg(config_path);
        if (!cfg.contains("seed")) cfg["seed"] = seed;
        if (!cfg.contains("experiment")) cfg["experiment"] = "predict";
        ExperimentConfig ec = ExperimentConfig::from_json(cfg);
        ec.overrides = cfg.value("overrides", json::object());
        ResidualCompareResult r = run_residual_compare(ec);
        ResultTable t("prediction", {"t", "measured_residual", "predicted_residual", "rel_dev"});
        t.set_provenance(cfg.dump(), ec.seed);
        for (std::size_t i = 0; i < r.report.iters.size(); ++i) {
            double dev = r.report.predicted[i] > 0
                             ? std::abs(r.report.measured[i] - r.report.predicted[i]) /
                                   r.report.predicted[i]
                             : 0.0;
            t.add_row({static_cast<double>(r.report.iters[i]), r.report.measured[i],
                       r.report.predicted[i], dev});
        }
        t.write(out_dir);
        std::cout << "max relative deviation " << r.report.max_rel_dev << " over "
                  << r.report.horizon << " iterations (drift " << r.drift << ", "
                  << (r.in_regime ? "in" : "out of") << " NTK regime)\n";
        return 0;
    }

    if (c_repro->parsed()) {
        json cfg = config_path.empty() ? json::object() : parse_json_arg(config_path);
        cfg["experiment"] = fig_id;
        if (!cfg.contains("seed")) cfg["seed"] = seed;
        if (!cfg.contains("out")) cfg["out"] = out_dir;
        if (paper_scale) cfg["paper_scale"] = true;
        auto problems = validate(cfg);
        if (!problems.empty()) {
            for (const auto& p : problems) std::cerr << "config: " << p << "\n";
            return 2;
        }
        if (dry_run) {
            for (const auto& e : list_experiments())
                if (e.id == fig_id)
                    std::cout << "would run " << e.id << " (" << e.description << "), expected "
                              << e.runtime << ", " << e.memory << "\n";
            return 0;
        }
        auto tables = run_experiment(ExperimentConfig::from_json(cfg));
        for (const auto& t : tables)
            std::cout << "wrote " << (std::filesystem::path(cfg["out"].get<std::string>()) /
                                      (t.name() + ".csv")).string() << "\n";
        return 0;
    }
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"NTK spectra for non-uniform densities on spheres"};
    try {
        return dispatch(app, argc, argv);
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const budget_error& e) {
        std::cerr << "budget exceeded: " << e.what() << "\n";
        return 4;
    } catch (const numerical_error& e) {
        std::cerr << "numerical fault: " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
