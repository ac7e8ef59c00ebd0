#include "jmf/artifacts.hpp"
#include "jmf/experiment.hpp"
#include "jmf/predict.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using jmf::experiment::json;

namespace {

constexpr int kOk = 0;
constexpr int kAllDiverged = 1;
constexpr int kUsage = 2;

struct GenerateArgs {
    std::string dataset;
    std::uint64_t seed = 0;
    std::optional<double> noise;
    double constraint_noise = 0.1;
    std::string out;
};

struct RunArgs {
    std::string config;
    std::string out;
    std::vector<std::uint64_t> seeds;
    bool serial = false;
};

struct PredictArgs {
    std::string model;
    std::string mode;
    std::vector<std::string> test;
    std::size_t target = 0;
    std::string out;
    std::string labels;
    std::string truth;
    std::string algorithm;
    std::uint64_t seed = 0;
};

std::string num(double v)
{
    return std::isfinite(v) ? jmf::io::format_double(v) : std::string("nan");
}

int cmd_generate(const GenerateArgs& a)
{
    jmf::SyntheticSpec spec;
    spec.dataset = jmf::parse_synthetic_id(a.dataset);
    spec.seed = a.seed;
    spec.noise = a.noise;
    spec.constraint_noise = a.constraint_noise;
    const auto gt = jmf::generate(spec);
    const json manifest = jmf::artifacts::write_generated(gt, a.out);
    std::cout << "wrote " << manifest.at("files").size() << " matrices and manifest.json to " << a.out << "\n";
    for (const auto& f : manifest.at("files")) {
        if (f.at("role") == "data") {
            std::cout << "  " << f.at("path").get<std::string>() << " " << f.at("shape")[0] << "x" << f.at("shape")[1]
                      << "\n";
        }
    }
    return kOk;
}

jmf::experiment::ExperimentConfig load_config(const RunArgs& a)
{
    const fs::path path(a.config);
    auto cfg = jmf::experiment::parse_config(jmf::artifacts::read_json(path), path.parent_path());
    if (!a.seeds.empty()) {
        cfg.seeds = a.seeds;
    }
    if (cfg.seeds.empty()) {
        cfg.seeds = {0};
    }
    cfg.validate();
    return cfg;
}

std::string run_label(const jmf::experiment::ExperimentConfig& cfg, const jmf::experiment::RunResult& r)
{
    return "solver" + std::to_string(r.solver_index) + "_" + jmf::to_string(cfg.solvers[r.solver_index].algorithm) +
           "_seed" + std::to_string(r.seed);
}

int cmd_solve(const RunArgs& a)
{
    const auto cfg = load_config(a);
    const auto runs = jmf::experiment::run_all(cfg, cfg.params, a.serial);
    const auto rows = jmf::experiment::summarize(cfg, runs);

    const fs::path out(a.out);
    json run_list = json::array();
    int diverged = 0;
    for (const auto& r : runs) {
        const std::string label = run_label(cfg, r);
        const fs::path dir = out / "runs" / label;
        json entry{{"solver", r.solver_index},
                   {"algorithm", jmf::to_string(cfg.solvers[r.solver_index].algorithm)},
                   {"stop_rule", jmf::to_string(cfg.solvers[r.solver_index].stop_rule)},
                   {"tolerance", cfg.solvers[r.solver_index].tolerance},
                   {"seed", r.seed},
                   {"diverged", r.diverged()}};
        if (r.diverged()) {
            ++diverged;
        }
        if (!r.error.empty()) {
            entry["error"] = r.error;
            run_list.push_back(entry);
            continue;
        }
        jmf::io::write_text(dir / "trace.csv", jmf::experiment::trace_csv(r.report));
        entry["trace"] = (fs::path("runs") / label / "trace.csv").generic_string();
        entry["termination"] = jmf::to_string(r.report.termination);
        entry["iterations"] = r.report.iterations;
        entry["seconds"] = r.report.trace.empty() ? 0.0 : r.report.trace.back().seconds;
        entry["final_objective"] = jmf::experiment::number_or_null(r.report.final_objective);
        entry["reconstruction_error"] = jmf::experiment::number_or_null(r.report.reconstruction_error);
        if (!r.diverged()) {
            jmf::TrainedModel model{r.factors, cfg.params, cfg.solvers[r.solver_index].algorithm,
                                    cfg.solvers[r.solver_index].stop_rule, r.seed};
            model.params.rank = r.factors.W.cols();
            jmf::artifacts::save_model(model, dir);
            entry["model"] = (fs::path("runs") / label / "model.json").generic_string();
        }
        if (r.eval) {
            entry["auc"] = jmf::experiment::number_or_null(r.eval->auc);
            entry["auc_W"] = jmf::experiment::number_or_null(r.eval->auc_W);
            entry["auc_H"] = jmf::experiment::number_or_null(r.eval->auc_H);
            json per_view = json::array();
            for (double v : r.eval->per_view_auc) {
                per_view.push_back(jmf::experiment::number_or_null(v));
            }
            entry["per_view_auc"] = per_view;
        }
        run_list.push_back(entry);
    }

    json row_list = json::array();
    for (const auto& row : rows) {
        row_list.push_back(jmf::experiment::to_json(row));
    }
    json summary{{"params", jmf::experiment::to_json(cfg.params)},
                 {"constraints", cfg.use_constraints},
                 {"seeds", cfg.seeds},
                 {"rows", row_list},
                 {"runs", run_list}};
    if (cfg.rank) {
        summary["params"]["rank"] = *cfg.rank;
    } else {
        summary["params"].erase("rank");
    }
    jmf::io::write_text(out / "summary.json", summary.dump(2) + "\n");
    jmf::io::write_text(out / "summary.csv", jmf::experiment::rows_csv(rows));

    std::printf("%-6s %-15s %-9s %4s %12s %10s %16s %8s %4s %4s\n", "algo", "stop", "tol", "runs", "seconds", "iters",
                "recon_error", "auc", "div", "cap");
    for (const auto& row : rows) {
        std::printf("%-6s %-15s %-9.1e %4d %12.4f %10.1f %16.4f %8.4f %4d %4d\n", jmf::to_string(row.algorithm),
                    jmf::to_string(row.stop_rule), row.tolerance, row.runs, row.mean_seconds, row.mean_iterations,
                    row.mean_reconstruction_error, row.mean_auc, row.diverged, row.cap_exceeded);
    }
    if (diverged == static_cast<int>(runs.size())) {
        std::cerr << "every run diverged\n";
        return kAllDiverged;
    }
    return kOk;
}

int cmd_gridsearch(const RunArgs& a)
{
    const auto cfg = load_config(a);
    const auto cells = jmf::experiment::run_grid(cfg, a.serial);
    const std::size_t best = jmf::experiment::select_best(cells);

    std::string csv = "lambda1,lambda2,gamma1,gamma2,mean_auc,mean_reconstruction_error,diverged\n";
    int all_diverged = 0;
    for (const auto& c : cells) {
        csv += num(c.params.lambda1) + "," + num(c.params.lambda2) + "," + num(c.params.gamma1) + "," +
               num(c.params.gamma2) + "," + num(c.mean_auc) + "," + num(c.mean_reconstruction_error) + "," +
               std::to_string(c.diverged) + "\n";
        if (!std::isfinite(c.mean_auc)) {
            ++all_diverged;
        }
    }
    const fs::path out(a.out);
    jmf::io::write_text(out / "grid.csv", csv);
    const auto& b = cells[best];
    json best_json{{"lambda1", b.params.lambda1},
                   {"lambda2", b.params.lambda2},
                   {"gamma1", b.params.gamma1},
                   {"gamma2", b.params.gamma2},
                   {"mean_auc", jmf::experiment::number_or_null(b.mean_auc)},
                   {"mean_reconstruction_error", jmf::experiment::number_or_null(b.mean_reconstruction_error)},
                   {"cells", cells.size()}};
    jmf::io::write_text(out / "best.json", best_json.dump(2) + "\n");
    std::cout << "best of " << cells.size() << " cells: lambda1=" << b.params.lambda1
              << " lambda2=" << b.params.lambda2 << " gamma1=" << b.params.gamma1 << " gamma2=" << b.params.gamma2
              << " auc=" << b.mean_auc << " error=" << b.mean_reconstruction_error << "\n";
    if (all_diverged == static_cast<int>(cells.size())) {
        std::cerr << "every grid cell diverged\n";
        return kAllDiverged;
    }
    return kOk;
}

std::vector<jmf::Matrix> read_all(const std::vector<std::string>& paths)
{
    std::vector<jmf::Matrix> out;
    for (const auto& p : paths) {
        out.push_back(jmf::io::read_matrix(p));
    }
    return out;
}

double relative_error(const jmf::Matrix& estimate, const jmf::Matrix& truth)
{
    jmf::detail::require(estimate.rows() == truth.rows() && estimate.cols() == truth.cols(),
                         "reference matrix is " + jmf::detail::shape_str(truth) + ", prediction is " +
                             jmf::detail::shape_str(estimate));
    const double den = truth.norm();
    return den > 0.0 ? (estimate - truth).norm() / den : (estimate - truth).norm();
}

int cmd_predict(const PredictArgs& a)
{
    const auto model = jmf::artifacts::load_model(a.model);
    jmf::PredictConfig config;
    config.seed = a.seed;
    if (!a.algorithm.empty()) {
        config.algorithm = jmf::parse_algorithm(a.algorithm);
    }
    const fs::path out(a.out);
    json report{{"mode", a.mode}, {"model", a.model}};
    const auto test = read_all(a.test);

    if (a.mode == "L-class") {
        const jmf::Matrix w_hat = jmf::predict_left(model, jmf::MultiViewDataset(test), config);
        const auto classes = jmf::predict_class(w_hat);
        jmf::io::write_matrix(out / "W_hat.csv", w_hat);
        std::string lines;
        for (auto c : classes) {
            lines += std::to_string(c) + "\n";
        }
        jmf::io::write_text(out / "classes.csv", lines);
        if (!a.labels.empty()) {
            const jmf::Matrix labels = jmf::io::read_matrix(a.labels);
            jmf::detail::require(labels.size() == static_cast<jmf::Index>(classes.size()),
                                 "labels file has " + std::to_string(labels.size()) + " entries, expected " +
                                     std::to_string(classes.size()));
            std::size_t hits = 0;
            for (std::size_t i = 0; i < classes.size(); ++i) {
                hits += labels.data()[i] == static_cast<double>(classes[i]) ? 1 : 0;
            }
            report["accuracy"] = static_cast<double>(hits) / static_cast<double>(classes.size());
        }
    } else if (a.mode == "L-view") {
        const jmf::Matrix x_hat = jmf::predict_view(model, a.target, test, config);
        jmf::io::write_matrix(out / "X_hat.csv", x_hat);
        report["target"] = a.target;
        if (!a.truth.empty()) {
            report["relative_error"] = relative_error(x_hat, jmf::io::read_matrix(a.truth));
        }
    } else if (a.mode == "R") {
        const jmf::MultiViewDataset data(test);
        const auto hs = jmf::predict_right(model, data, config);
        double err = 0.0;
        double energy = 0.0;
        for (std::size_t i = 0; i < hs.size(); ++i) {
            jmf::io::write_matrix(out / ("H_hat_" + std::to_string(i) + ".csv"), hs[i]);
            err += (data.view(i) - model.factors.W * hs[i]).squaredNorm();
            energy += data.view(i).squaredNorm();
        }
        report["reconstruction_error"] = err;
        report["relative_error"] = energy > 0.0 ? std::sqrt(err / energy) : std::sqrt(err);
    } else {
        throw jmf::InvalidArgument("unknown mode '" + a.mode + "' (expected L-class, L-view or R)");
    }
    jmf::io::write_text(out / "report.json", report.dump(2) + "\n");
    std::cout << report.dump() << "\n";
    return kOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Joint nonnegative matrix factorization: generate, solve, gridsearch, predict"};
    app.require_subcommand(1);

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate", "Write a synthetic benchmark instance");
    g->add_option("--dataset", gen.dataset, "D1, D2, D3 or D4")->required();
    g->add_option("--seed", gen.seed, "Generator seed");
    g->add_option("--noise", gen.noise, "Data noise level (dataset default when omitted)");
    g->add_option("--constraint-noise", gen.constraint_noise, "Noise scale on constraint matrices");
    g->add_option("--out", gen.out, "Output directory")->required();

    RunArgs solve_args;
    auto* s = app.add_subcommand("solve", "Run every (solver, seed) pair of a config");
    s->add_option("--config", solve_args.config, "Experiment JSON")->required()->check(CLI::ExistingFile);
    s->add_option("--out", solve_args.out, "Output directory")->required();
    s->add_option("--seeds", solve_args.seeds, "Override the config's seeds")->delimiter(',');
    s->add_flag("--serial", solve_args.serial, "Run one job at a time (for timing)");

    RunArgs grid_args;
    auto* gs = app.add_subcommand("gridsearch", "Select regularization weights by mean AUC");
    gs->add_option("--config", grid_args.config, "Experiment JSON")->required()->check(CLI::ExistingFile);
    gs->add_option("--out", grid_args.out, "Output directory")->required();
    gs->add_option("--seeds", grid_args.seeds, "Seeds for the repeats")->delimiter(',');
    gs->add_flag("--serial", grid_args.serial, "Run one job at a time");

    PredictArgs pred;
    auto* p = app.add_subcommand("predict", "Predict with a trained model");
    p->add_option("--model", pred.model, "model.json")->required()->check(CLI::ExistingFile);
    p->add_option("--mode", pred.mode, "L-class, L-view or R")
        ->required()
        ->check(CLI::IsMember({"L-class", "L-view", "R"}));
    p->add_option("--test", pred.test, "Test matrices in model view order (L-view: all but the target)")
        ->required()
        ->check(CLI::ExistingFile);
    p->add_option("--target", pred.target, "Held-out view index for L-view");
    p->add_option("--labels", pred.labels, "True class per test row (L-class)")->check(CLI::ExistingFile);
    p->add_option("--truth", pred.truth, "Held-out view for error reporting (L-view)")->check(CLI::ExistingFile);
    p->add_option("--algorithm", pred.algorithm, "Inner solver (defaults to the training algorithm)");
    p->add_option("--seed", pred.seed, "Seed of the starting point");
    p->add_option("--out", pred.out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (g->parsed()) {
            return cmd_generate(gen);
        }
        if (s->parsed()) {
            return cmd_solve(solve_args);
        }
        if (gs->parsed()) {
            return cmd_gridsearch(grid_args);
        }
        return cmd_predict(pred);
    } catch (const jmf::InvalidArgument& e) {
        std::cerr << "error: " << e.what() << "\n";
    } catch (const jmf::io::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
    } catch (const json::exception& e) {
        std::cerr << "error: bad config: " << e.what() << "\n";
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
    }
    return kUsage;
}
