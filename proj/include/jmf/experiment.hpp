#pragma once

#include "jmf/artifacts.hpp"
#include "jmf/evaluate.hpp"
#include "jmf/io.hpp"
#include "jmf/model.hpp"
#include "jmf/solvers.hpp"
#include "jmf/synthgen.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace jmf::experiment {

using nlohmann::json;

/// Where the data comes from: a synthetic benchmark (regenerated per run seed
/// when `resample` is set), a manifest written by the generator, or matrix
/// files.
struct Source {
    std::optional<SyntheticSpec> synthetic;
    bool resample = true;
    std::optional<std::filesystem::path> manifest;
    std::vector<std::filesystem::path> views;
    /// within[v] lists constraint files for view v.
    std::vector<std::vector<std::filesystem::path>> within;
    std::vector<std::pair<ViewPair, std::filesystem::path>> between;
};

struct ExperimentConfig {
    Source source;
    bool use_constraints = true;
    /// params.rank is ignored; the factorization rank is `rank` when set,
    /// else the ground-truth rank of a synthetic source.
    Hyperparameters params;
    std::optional<Index> rank;
    std::vector<SolverConfig> solvers;
    std::vector<std::uint64_t> seeds;
    struct Grid {
        std::vector<double> lambda1, lambda2, gamma1, gamma2;
        int repeats = 3;
    };
    std::optional<Grid> grid;

    void validate() const
    {
        detail::require(!solvers.empty(), "experiment needs at least one solver config");
        detail::require(!seeds.empty(), "experiment needs at least one seed");
        detail::require(source.synthetic || source.manifest || !source.views.empty(),
                        "experiment needs a data source");
        detail::require(rank.has_value() || source.synthetic || source.manifest,
                        "file sources need an explicit rank");
        detail::require(!rank || *rank >= 1, "rank must be >= 1");
        for (const auto& s : solvers) {
            s.validate();
            detail::require(!(s.algorithm == Algorithm::MUR && s.stop_rule == StopRule::GradientRatio),
                            "MUR runs only with the objective-ratio stop rule (Stop1)");
        }
    }
};

// ---------------------------------------------------------------------------
// JSON parsing
// ---------------------------------------------------------------------------

namespace detail_json {

template <class T>
void get_if(const json& j, const char* key, T& out)
{
    if (j.contains(key)) {
        out = j.at(key).get<T>();
    }
}

inline std::vector<double> doubles(const json& j, const char* key)
{
    std::vector<double> out;
    if (j.contains(key)) {
        out = j.at(key).get<std::vector<double>>();
    }
    return out;
}

} // namespace detail_json

inline SyntheticSpec parse_synthetic(const json& j)
{
    SyntheticSpec s;
    s.dataset = parse_synthetic_id(j.value("dataset", std::string("D1")));
    if (j.contains("noise")) {
        s.noise = j.at("noise").get<double>();
    }
    s.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("coph_W")) {
        s.coph_W = j.at("coph_W").get<Index>();
    }
    if (j.contains("coph_H")) {
        const auto v = j.at("coph_H").get<std::vector<Index>>();
        for (std::size_t i = 0; i < v.size() && i < 3; ++i) {
            s.coph_H[i] = v[i];
        }
    }
    s.constraint_noise = j.value("constraint_noise", 0.1);
    return s;
}

inline json to_json(const SyntheticSpec& s)
{
    json j{{"dataset", to_string(s.dataset)}, {"seed", s.seed}, {"constraint_noise", s.constraint_noise}};
    if (s.noise) {
        j["noise"] = *s.noise;
    }
    if (s.coph_W) {
        j["coph_W"] = *s.coph_W;
    }
    return j;
}

inline Hyperparameters parse_params(const json& j)
{
    Hyperparameters p;
    detail_json::get_if(j, "rank", p.rank);
    detail_json::get_if(j, "lambda1", p.lambda1);
    detail_json::get_if(j, "lambda2", p.lambda2);
    detail_json::get_if(j, "gamma1", p.gamma1);
    detail_json::get_if(j, "gamma2", p.gamma2);
    return p;
}

inline json to_json(const Hyperparameters& p)
{
    return {{"rank", p.rank}, {"lambda1", p.lambda1}, {"lambda2", p.lambda2}, {"gamma1", p.gamma1},
            {"gamma2", p.gamma2}};
}

inline SolverConfig parse_solver(const json& j)
{
    SolverConfig c;
    c.algorithm = parse_algorithm(j.value("algorithm", std::string("PANLS")));
    c.stop_rule = parse_stop_rule(j.value("stop_rule", std::string("ObjectiveRatio")));
    detail_json::get_if(j, "tolerance", c.tolerance);
    detail_json::get_if(j, "max_outer_iters", c.max_outer_iters);
    detail_json::get_if(j, "inner_iters", c.inner_iters);
    detail_json::get_if(j, "inner_tolerance", c.inner_tolerance);
    detail_json::get_if(j, "normalize_rows", c.normalize_rows);
    if (j.contains("pg")) {
        const auto& g = j.at("pg");
        detail_json::get_if(g, "sigma", c.pg.sigma);
        detail_json::get_if(g, "beta", c.pg.beta);
        detail_json::get_if(g, "alpha0", c.pg.alpha0);
        detail_json::get_if(g, "max_backtracks", c.pg.max_backtracks);
    }
    if (j.contains("panls")) {
        const auto& g = j.at("panls");
        detail_json::get_if(g, "eta", c.panls.eta);
        detail_json::get_if(g, "alpha", c.panls.alpha);
        detail_json::get_if(g, "beta", c.panls.beta);
        detail_json::get_if(g, "rho", c.panls.rho);
        detail_json::get_if(g, "n1", c.panls.n1);
        detail_json::get_if(g, "n2", c.panls.n2);
        detail_json::get_if(g, "tau1", c.panls.tau1);
        detail_json::get_if(g, "tau2", c.panls.tau2);
        detail_json::get_if(g, "convexify_h", c.panls.convexify_h);
    }
    return c;
}

/// Relative paths in the config resolve against `base`.
inline ExperimentConfig parse_config(const json& j, const std::filesystem::path& base = {})
{
    ExperimentConfig cfg;
    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_absolute() || base.empty() ? path : base / path;
    };
    const json& src = j.at("source");
    if (src.contains("synthetic")) {
        cfg.source.synthetic = parse_synthetic(src.at("synthetic"));
        cfg.source.resample = src.value("resample", true);
    } else if (src.contains("manifest")) {
        cfg.source.manifest = resolve(src.at("manifest").get<std::string>());
    } else {
        for (const auto& v : src.at("views")) {
            cfg.source.views.push_back(resolve(v.get<std::string>()));
        }
        cfg.source.within.resize(cfg.source.views.size());
        if (src.contains("within")) {
            for (const auto& w : src.at("within")) {
                const auto view = w.at("view").get<std::size_t>();
                detail::require(view < cfg.source.views.size(), "within constraint for unknown view");
                cfg.source.within[view].push_back(resolve(w.at("path").get<std::string>()));
            }
        }
        if (src.contains("between")) {
            for (const auto& b : src.at("between")) {
                cfg.source.between.push_back(
                    {{b.at("i").get<std::size_t>(), b.at("j").get<std::size_t>()}, resolve(b.at("path").get<std::string>())});
            }
        }
    }
    cfg.use_constraints = j.value("constraints", true);
    if (j.contains("params")) {
        cfg.params = parse_params(j.at("params"));
        if (j.at("params").contains("rank")) {
            cfg.rank = j.at("params").at("rank").get<Index>();
        }
    }
    if (j.contains("solvers")) {
        for (const auto& s : j.at("solvers")) {
            cfg.solvers.push_back(parse_solver(s));
        }
    } else {
        cfg.solvers.push_back(SolverConfig{});
    }
    if (j.contains("seeds")) {
        cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    }
    if (j.contains("grid")) {
        const auto& g = j.at("grid");
        ExperimentConfig::Grid grid;
        grid.lambda1 = detail_json::doubles(g, "lambda1");
        grid.lambda2 = detail_json::doubles(g, "lambda2");
        grid.gamma1 = detail_json::doubles(g, "gamma1");
        grid.gamma2 = detail_json::doubles(g, "gamma2");
        grid.repeats = g.value("repeats", 3);
        cfg.grid = grid;
    }
    return cfg;
}

/// The grid used for parameter selection on the synthetic benchmarks.
inline ExperimentConfig::Grid default_grid()
{
    ExperimentConfig::Grid g;
    g.lambda1 = g.lambda2 = g.gamma2 = {0.001, 0.01, 0.1, 1, 10, 100, 1000};
    g.gamma1 = {1e-6, 1e-5, 1e-4, 1e-3, 1e-2};
    return g;
}

// ---------------------------------------------------------------------------
// Problem instances
// ---------------------------------------------------------------------------

struct Instance {
    MultiViewDataset dataset;
    ConstraintSet constraints;
    std::optional<GroundTruth> truth;
};

inline Instance load_instance(const Source& src, std::uint64_t run_seed)
{
    Instance inst;
    if (src.synthetic) {
        SyntheticSpec spec = *src.synthetic;
        if (src.resample) {
            spec.seed = run_seed;
        }
        GroundTruth gt = generate(spec);
        inst.dataset = gt.dataset();
        inst.constraints = gt.constraints;
        inst.truth = std::move(gt);
        return inst;
    }
    if (src.manifest) {
        auto loaded = artifacts::load_manifest(*src.manifest);
        inst.dataset = std::move(loaded.dataset);
        inst.constraints = std::move(loaded.constraints);
        inst.truth = std::move(loaded.truth);
        return inst;
    }
    std::vector<Matrix> views;
    for (const auto& p : src.views) {
        views.push_back(io::read_matrix(p));
    }
    inst.dataset = MultiViewDataset(std::move(views));
    inst.constraints.within.resize(src.views.size());
    for (std::size_t v = 0; v < src.within.size(); ++v) {
        for (const auto& p : src.within[v]) {
            inst.constraints.within[v].push_back(io::read_matrix(p));
        }
    }
    for (const auto& [key, p] : src.between) {
        inst.constraints.between[key] = io::read_matrix(p);
    }
    return inst;
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

struct RunResult {
    std::size_t solver_index = 0;
    std::uint64_t seed = 0;
    SolverReport report;
    Factorization factors;
    std::optional<EvalResult> eval;
    std::string error;

    bool diverged() const { return report.termination == Termination::Diverged || !error.empty(); }
};

/// Worker count: JMF_THREADS if set, else the hardware concurrency, capped by
/// the number of jobs; 1 when `serial`.
inline unsigned thread_count(std::size_t jobs, bool serial)
{
    if (serial || jobs <= 1) {
        return 1;
    }
    unsigned n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("JMF_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) {
            n = static_cast<unsigned>(v);
        }
    }
    return static_cast<unsigned>(std::min<std::size_t>(n, jobs));
}

/// Runs fn(i) for i in [0, jobs) on a small pool.
template <class Fn>
void parallel_for(std::size_t jobs, unsigned threads, Fn&& fn)
{
    if (threads <= 1) {
        for (std::size_t i = 0; i < jobs; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < jobs; i = next++) {
                fn(i);
            }
        });
    }
}

inline RunResult run_one(const ExperimentConfig& cfg, const Hyperparameters& params, std::size_t solver_index,
                         std::uint64_t seed)
{
    RunResult r;
    r.solver_index = solver_index;
    r.seed = seed;
    try {
        const Instance inst = load_instance(cfg.source, seed);
        Hyperparameters p = params;
        detail::require(cfg.rank || inst.truth, "no rank configured and no ground truth to take it from");
        p.rank = cfg.rank ? *cfg.rank : inst.truth->rank();
        const Problem problem(inst.dataset, cfg.use_constraints ? inst.constraints : ConstraintSet{}, p);
        SolverConfig sc = cfg.solvers[solver_index];
        sc.seed = seed;
        auto out = solve(problem, sc);
        r.report = std::move(out.report);
        r.factors = std::move(out.factors);
        if (inst.truth && r.report.termination != Termination::Diverged) {
            r.eval = evaluate(r.factors, *inst.truth);
        }
    } catch (const InvalidArgument&) {
        throw;
    } catch (const io::IoError&) {
        throw;
    } catch (const std::exception& e) {
        r.error = e.what();
    }
    return r;
}

inline std::vector<RunResult> run_all(const ExperimentConfig& cfg, const Hyperparameters& params, bool serial)
{
    const std::size_t jobs = cfg.solvers.size() * cfg.seeds.size();
    std::vector<RunResult> results(jobs);
    std::exception_ptr failure;
    std::mutex m;
    parallel_for(jobs, thread_count(jobs, serial), [&](std::size_t i) {
        const std::size_t s = i / cfg.seeds.size();
        const std::uint64_t seed = cfg.seeds[i % cfg.seeds.size()];
        try {
            results[i] = run_one(cfg, params, s, seed);
        } catch (...) {
            std::lock_guard lock(m);
            if (!failure) {
                failure = std::current_exception();
            }
        }
    });
    if (failure) {
        std::rethrow_exception(failure);
    }
    return results;
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

struct BenchmarkRow {
    Algorithm algorithm = Algorithm::PANLS;
    StopRule stop_rule = StopRule::ObjectiveRatio;
    double tolerance = 0.0;
    int runs = 0;
    /// Means over runs that did not diverge; NaN when there are none (AUC
    /// also NaN without ground truth).
    double mean_seconds = 0.0;
    double mean_iterations = 0.0;
    double mean_reconstruction_error = 0.0;
    double mean_auc = 0.0;
    int diverged = 0;
    int cap_exceeded = 0;
};

inline std::vector<BenchmarkRow> summarize(const ExperimentConfig& cfg, const std::vector<RunResult>& results)
{
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<BenchmarkRow> rows;
    for (std::size_t s = 0; s < cfg.solvers.size(); ++s) {
        BenchmarkRow row;
        row.algorithm = cfg.solvers[s].algorithm;
        row.stop_rule = cfg.solvers[s].stop_rule;
        row.tolerance = cfg.solvers[s].tolerance;
        double secs = 0.0;
        double iters = 0.0;
        double err = 0.0;
        double auc = 0.0;
        int ok = 0;
        int with_auc = 0;
        for (const auto& r : results) {
            if (r.solver_index != s) {
                continue;
            }
            ++row.runs;
            if (r.diverged()) {
                ++row.diverged;
                continue;
            }
            if (r.report.termination == Termination::MaxIters) {
                ++row.cap_exceeded;
            }
            ++ok;
            secs += r.report.trace.back().seconds;
            iters += r.report.iterations;
            err += r.report.reconstruction_error;
            if (r.eval && std::isfinite(r.eval->auc)) {
                auc += r.eval->auc;
                ++with_auc;
            }
        }
        row.mean_seconds = ok ? secs / ok : nan;
        row.mean_iterations = ok ? iters / ok : nan;
        row.mean_reconstruction_error = ok ? err / ok : nan;
        row.mean_auc = with_auc ? auc / with_auc : nan;
        rows.push_back(row);
    }
    return rows;
}

inline json number_or_null(double v)
{
    return std::isfinite(v) ? json(v) : json(nullptr);
}

inline json to_json(const BenchmarkRow& r)
{
    return {{"algorithm", to_string(r.algorithm)},
            {"stop_rule", to_string(r.stop_rule)},
            {"tolerance", r.tolerance},
            {"runs", r.runs},
            {"mean_seconds", number_or_null(r.mean_seconds)},
            {"mean_iterations", number_or_null(r.mean_iterations)},
            {"mean_reconstruction_error", number_or_null(r.mean_reconstruction_error)},
            {"mean_auc", number_or_null(r.mean_auc)},
            {"diverged", r.diverged},
            {"cap_exceeded", r.cap_exceeded}};
}

inline std::string rows_csv(const std::vector<BenchmarkRow>& rows)
{
    auto num = [](double v) { return std::isfinite(v) ? io::format_double(v) : std::string("nan"); };
    std::string out = "algorithm,stop_rule,tolerance,runs,mean_seconds,mean_iterations,mean_reconstruction_error,"
                      "mean_auc,diverged,cap_exceeded\n";
    for (const auto& r : rows) {
        out += std::string(to_string(r.algorithm)) + "," + to_string(r.stop_rule) + "," + num(r.tolerance) + "," +
               std::to_string(r.runs) + "," + num(r.mean_seconds) + "," + num(r.mean_iterations) + "," +
               num(r.mean_reconstruction_error) + "," + num(r.mean_auc) + "," + std::to_string(r.diverged) + "," +
               std::to_string(r.cap_exceeded) + "\n";
    }
    return out;
}

inline std::string trace_csv(const SolverReport& report)
{
    std::string out = "iter,objective,grad_norm,seconds\n";
    for (const auto& e : report.trace) {
        out += std::to_string(e.iteration) + "," + io::format_double(e.objective) + "," +
               io::format_double(e.grad_norm) + "," + io::format_double(e.seconds) + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Grid search
// ---------------------------------------------------------------------------

struct GridCell {
    Hyperparameters params;
    double mean_auc = 0.0;
    double mean_reconstruction_error = 0.0;
    int diverged = 0;
};

/// Highest mean AUC wins; cells within 1e-6 AUC of each other are ranked by
/// the smaller mean reconstruction error. Cells with non-finite AUC lose.
inline std::size_t select_best(const std::vector<GridCell>& cells)
{
    detail::require(!cells.empty(), "grid is empty");
    std::size_t best = 0;
    auto auc = [](const GridCell& c) { return std::isfinite(c.mean_auc) ? c.mean_auc : -1.0; };
    auto err = [](const GridCell& c) {
        return std::isfinite(c.mean_reconstruction_error) ? c.mean_reconstruction_error
                                                          : std::numeric_limits<double>::infinity();
    };
    for (std::size_t i = 1; i < cells.size(); ++i) {
        const double da = auc(cells[i]) - auc(cells[best]);
        if (da > 1e-6 || (std::abs(da) <= 1e-6 && err(cells[i]) < err(cells[best]))) {
            best = i;
        }
    }
    return best;
}

inline std::vector<Hyperparameters> grid_points(const ExperimentConfig::Grid& g, const Hyperparameters& base)
{
    auto or_base = [](const std::vector<double>& v, double b) { return v.empty() ? std::vector<double>{b} : v; };
    std::vector<Hyperparameters> out;
    for (double l1 : or_base(g.lambda1, base.lambda1)) {
        for (double l2 : or_base(g.lambda2, base.lambda2)) {
            for (double g1 : or_base(g.gamma1, base.gamma1)) {
                for (double g2 : or_base(g.gamma2, base.gamma2)) {
                    Hyperparameters p = base;
                    p.lambda1 = l1;
                    p.lambda2 = l2;
                    p.gamma1 = g1;
                    p.gamma2 = g2;
                    out.push_back(p);
                }
            }
        }
    }
    return out;
}

/// Every grid cell is run with the first solver config on seeds
/// 0..repeats-1 (or the configured seeds, first `repeats` of them).
inline std::vector<GridCell> run_grid(const ExperimentConfig& cfg, bool serial)
{
    detail::require(cfg.source.synthetic || cfg.source.manifest,
                    "grid search needs a synthetic source (AUC needs ground truth)");
    const auto grid = cfg.grid.value_or(default_grid());
    const auto points = grid_points(grid, cfg.params);
    detail::require(!points.empty(), "grid is empty");
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < grid.repeats; ++i) {
        seeds.push_back(i < static_cast<int>(cfg.seeds.size()) ? cfg.seeds[i] : static_cast<std::uint64_t>(i));
    }
    const std::size_t jobs = points.size() * seeds.size();
    std::vector<RunResult> results(jobs);
    parallel_for(jobs, thread_count(jobs, serial), [&](std::size_t i) {
        results[i] = run_one(cfg, points[i / seeds.size()], 0, seeds[i % seeds.size()]);
    });
    std::vector<GridCell> cells;
    for (std::size_t p = 0; p < points.size(); ++p) {
        GridCell cell;
        cell.params = points[p];
        double auc = 0.0;
        double err = 0.0;
        int ok = 0;
        for (std::size_t s = 0; s < seeds.size(); ++s) {
            const auto& r = results[p * seeds.size() + s];
            if (r.diverged() || !r.eval) {
                ++cell.diverged;
                continue;
            }
            auc += r.eval->auc;
            err += r.report.reconstruction_error;
            ++ok;
        }
        const double nan = std::numeric_limits<double>::quiet_NaN();
        cell.mean_auc = ok ? auc / ok : nan;
        cell.mean_reconstruction_error = ok ? err / ok : nan;
        cells.push_back(cell);
    }
    return cells;
}

} // namespace jmf::experiment
