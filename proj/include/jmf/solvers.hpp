#pragma once

#include "jmf/model.hpp"
#include "jmf/objective.hpp"
#include "jmf/subproblem.hpp"

#include <chrono>
#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <optional>
#include <utility>

namespace jmf {

// ---------------------------------------------------------------------------
// Stopping criteria
// ---------------------------------------------------------------------------

struct StopState {
    static constexpr std::size_t window = 10;

    StopState(double initial_objective, double initial_grad_norm)
        : initial_objective(initial_objective), initial_grad_norm(initial_grad_norm),
          previous_objective(initial_objective)
    {
    }

    double initial_objective;
    double initial_grad_norm;
    double previous_objective;
    /// Newest last; at most `window` entries.
    std::deque<double> recent_grad_norms;
};

/// Objective-ratio rule: (F_prev - F_curr) / (F_initial - F_curr) <= tol.
/// A non-positive denominator (no net progress since the start) stops.
inline bool check_stop_objective(double f_prev, double f_curr, double f_initial, double tol)
{
    const double denom = f_initial - f_curr;
    if (!(denom > 0.0)) {
        return true;
    }
    return (f_prev - f_curr) / denom <= tol;
}

inline bool check_stop_objective(const StopState& state, double f_curr, double tol)
{
    return check_stop_objective(state.previous_objective, f_curr, state.initial_objective, tol);
}

enum class GradientStop { Continue, RatioMet, SlowChange };

/// Records `grad_norm` in the window and evaluates the gradient rule:
/// ||g_t|| <= tol ||g_1||, or, once the window holds 10 norms,
/// |newest - oldest| <= 1e-3 tol ||g_1||.
inline GradientStop gradient_stop_reason(StopState& state, double grad_norm, double tol)
{
    state.recent_grad_norms.push_back(grad_norm);
    while (state.recent_grad_norms.size() > StopState::window) {
        state.recent_grad_norms.pop_front();
    }
    if (grad_norm <= tol * state.initial_grad_norm) {
        return GradientStop::RatioMet;
    }
    if (state.recent_grad_norms.size() == StopState::window &&
        std::abs(grad_norm - state.recent_grad_norms.front()) <= 1e-3 * tol * state.initial_grad_norm) {
        return GradientStop::SlowChange;
    }
    return GradientStop::Continue;
}

inline bool check_stop_gradient(StopState& state, double grad_norm, double tol)
{
    return gradient_stop_reason(state, grad_norm, tol) != GradientStop::Continue;
}

// ---------------------------------------------------------------------------
// Inner solvers on a single quadratic subproblem
// ---------------------------------------------------------------------------

struct InnerResult {
    Matrix x;
    int iterations = 0;
    bool armijo_exhausted = false;
    bool cg_breakdown = false;
    int phase_switches = 0;
};

inline double subproblem_projected_norm(const QuadraticSubproblem& sub, const Matrix& x)
{
    return std::sqrt(detail::projected_sq_norm(x, sub.gradient(x)));
}

namespace detail {

/// Armijo search along the projection arc: alpha = alpha0 * beta^t for the
/// first t with (1 - sigma) <g, d> + 1/2 <d, Q d> <= 0, d = P[x - alpha g] - x.
/// On success `x` is replaced by the accepted point.
inline bool armijo_projected_step(const QuadraticSubproblem& sub, Matrix& x, const Matrix& g, const PgConstants& c)
{
    double alpha = c.alpha0;
    for (int t = 0; t <= c.max_backtracks; ++t) {
        Matrix next = (x - alpha * g).cwiseMax(0.0);
        const Matrix d = next - x;
        const double lhs = (1.0 - c.sigma) * g.cwiseProduct(d).sum() + 0.5 * sub.curvature(d);
        if (lhs <= 0.0) {
            x = std::move(next);
            return true;
        }
        alpha *= c.beta;
    }
    return false;
}

inline Index count_active(const Matrix& x)
{
    return (x.array() == 0.0).count();
}

/// Undecided index set U(x) is nonempty: some entry has a large gradient
/// while sitting well away from the bound.
inline bool undecided_nonempty(const Matrix& x, const Matrix& g, double pnorm, const PanlsConstants& c)
{
    const double grad_thresh = std::pow(pnorm, c.alpha);
    const double value_thresh = std::pow(pnorm, c.beta);
    return ((g.array().abs() >= grad_thresh) && (x.array() >= value_thresh)).any();
}

} // namespace detail

/// Projected gradient with Armijo steps until the projected gradient norm
/// drops below `tol` or `max_iters` steps were taken.
inline InnerResult run_pg(const QuadraticSubproblem& sub, Matrix x, int max_iters, double tol, const PgConstants& c)
{
    InnerResult res;
    Matrix g = sub.gradient(x);
    while (res.iterations < max_iters) {
        if (std::sqrt(detail::projected_sq_norm(x, g)) < tol) {
            break;
        }
        if (!detail::armijo_projected_step(sub, x, g, c)) {
            res.armijo_exhausted = true;
            break;
        }
        g = sub.gradient(x);
        ++res.iterations;
    }
    res.x = std::move(x);
    return res;
}

/// Momentum recurrence a_{k+1} = (1 + sqrt(4 a_k^2 + 1)) / 2.
inline double next_momentum(double a)
{
    return 0.5 * (1.0 + std::sqrt(4.0 * a * a + 1.0));
}

/// Nesterov's optimal gradient method with step 1/L. The gradient is affine,
/// so the gradient at the extrapolated point is the same affine combination
/// of the two latest iterate gradients and costs no extra operator product.
inline InnerResult run_ne(const QuadraticSubproblem& sub, Matrix x, int max_iters, double tol)
{
    InnerResult res;
    const double lip = sub.lipschitz();
    Matrix g_x = sub.gradient(x);
    if (!(lip > 0.0) || std::sqrt(detail::projected_sq_norm(x, g_x)) < tol) {
        res.x = std::move(x);
        return res;
    }
    Matrix y = x;
    Matrix g_y = g_x;
    double a = 1.0;
    while (res.iterations < max_iters) {
        Matrix x_next = (y - g_y / lip).cwiseMax(0.0);
        Matrix g_next = sub.gradient(x_next);
        const double a_next = next_momentum(a);
        const double c = (a - 1.0) / a_next;
        y = (1.0 + c) * x_next - c * x;
        g_y = (1.0 + c) * g_next - c * g_x;
        x = std::move(x_next);
        g_x = std::move(g_next);
        a = a_next;
        ++res.iterations;
        if (std::sqrt(detail::projected_sq_norm(x, g_x)) < tol) {
            break;
        }
    }
    res.x = std::move(x);
    return res;
}

/// Active-set scheme alternating Armijo projected-gradient steps with linear
/// conjugate gradient restricted to the current face (strictly positive
/// entries). PG runs until the free-variable gradient dominates for n1
/// consecutive steps; CG hands back to PG when the free gradient becomes
/// small relative to eta * ||projected gradient||, or when the active set
/// grows by at most n2 while undecided indices exist. Larger growth restarts
/// CG on the reduced face. Non-positive curvature falls back to PG.
inline InnerResult run_panls(const QuadraticSubproblem& sub, Matrix x, int max_iters, double tol,
                             const PgConstants& pg, const PanlsConstants& c)
{
    InnerResult res;
    double eta = c.eta;
    Matrix g = sub.gradient(x);
    double pnorm = std::sqrt(detail::projected_sq_norm(x, g));

    bool in_cg = false;
    int pg_streak = 0;
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> free;
    Matrix p;
    double rr = 0.0;

    auto start_cg = [&] {
        free = x.array() > 0.0;
        p = free.select(-g, 0.0);
        rr = p.squaredNorm();
    };
    auto to_pg = [&] {
        in_cg = false;
        pg_streak = 0;
        ++res.phase_switches;
    };

    while (pnorm > tol && res.iterations < max_iters) {
        if (!in_cg) {
            if (!detail::armijo_projected_step(sub, x, g, pg)) {
                res.armijo_exhausted = true;
                break;
            }
            g = sub.gradient(x);
            pnorm = std::sqrt(detail::projected_sq_norm(x, g));
            ++res.iterations;
            const double free_norm = std::sqrt(detail::interior_sq_norm(x, g));
            if (free_norm < eta * pnorm) {
                eta *= c.rho;
                pg_streak = 0;
            } else if (++pg_streak >= c.n1) {
                in_cg = true;
                ++res.phase_switches;
                start_cg();
            }
            continue;
        }

        if (rr == 0.0) {
            to_pg();
            continue;
        }
        const Matrix qp = sub.apply(p);
        const double curv = qp.cwiseProduct(p).sum();
        if (!(curv > 0.0)) {
            res.cg_breakdown = true;
            to_pg();
            continue;
        }
        double step = rr / curv;
        Index hit = -1;
        for (Index i = 0; i < x.size(); ++i) {
            const double pi = p.data()[i];
            if (pi < 0.0) {
                const double limit = x.data()[i] / -pi;
                if (limit < step) {
                    step = limit;
                    hit = i;
                }
            }
        }
        const Index active_before = detail::count_active(x);
        const bool undecided = detail::undecided_nonempty(x, g, pnorm, c);

        x += step * p;
        if (hit >= 0) {
            x.data()[hit] = 0.0;
        }
        x = x.cwiseMax(0.0);
        g = sub.gradient(x);
        pnorm = std::sqrt(detail::projected_sq_norm(x, g));
        ++res.iterations;

        const double free_norm = std::sqrt(detail::interior_sq_norm(x, g));
        if (free_norm < eta * pnorm) {
            to_pg();
            continue;
        }
        const Index grew = detail::count_active(x) - active_before;
        if (undecided && grew > 0 && grew <= c.n2) {
            to_pg();
            continue;
        }
        if (grew > 0) {
            start_cg();
            continue;
        }
        const Matrix r = free.select(-g, 0.0);
        const double rr_next = r.squaredNorm();
        p = r + (rr_next / rr) * p;
        rr = rr_next;
    }
    res.x = std::move(x);
    return res;
}

// ---------------------------------------------------------------------------
// Subproblem operations on a problem + factors
// ---------------------------------------------------------------------------

/// Which factor a subproblem updates: W, or H_I for a view.
struct Target {
    enum class Kind { Basis, Coefficients };
    Kind kind = Kind::Basis;
    std::size_t view = 0;

    static Target basis() { return {Kind::Basis, 0}; }
    static Target coefficients(std::size_t view) { return {Kind::Coefficients, view}; }
};

namespace detail {

inline const Matrix& target_factor(const Factorization& f, Target t)
{
    return t.kind == Target::Kind::Basis ? f.W : f.H.at(t.view);
}

inline QuadraticSubproblem target_subproblem(const Problem& problem, const Factorization& f, Target t,
                                             double tau = 0.0, const Matrix* anchor = nullptr)
{
    if (t.kind == Target::Kind::Basis) {
        return w_subproblem(problem, f, tau, anchor);
    }
    return h_subproblem(problem, f, t.view, tau, anchor);
}

} // namespace detail

/// One multiplicative update of W:
/// w_ij <- w_ij (sum_I X_I H_I^T)_ij / ((sum_I W H_I H_I^T + gamma1 W)_ij + eps).
inline Matrix mur_step_W(const Problem& problem, const Factorization& f, double eps = 1e-12)
{
    return w_subproblem(problem, f).mur_step(f.W, eps);
}

/// One multiplicative update of H_I with numerator
/// W^T X_I + lambda1/2 H_I sum_t(Theta + Theta^T) + lambda2/2 (between pull)
/// and denominator (W^T W + gamma2 1 1^T) H_I + eps.
inline Matrix mur_step_H(const Problem& problem, const Factorization& f, std::size_t view, double eps = 1e-12)
{
    problem.check_view(view);
    return h_subproblem(problem, f, view).mur_step(f.H[view], eps);
}

inline InnerResult pg_subproblem(const Problem& problem, const Factorization& f, Target target,
                                 const SolverConfig& config)
{
    const auto sub = detail::target_subproblem(problem, f, target);
    return run_pg(sub, detail::target_factor(f, target), config.inner_iters, config.inner_tolerance, config.pg);
}

inline InnerResult ne_subproblem(const Problem& problem, const Factorization& f, Target target,
                                 const SolverConfig& config)
{
    const auto sub = detail::target_subproblem(problem, f, target);
    return run_ne(sub, detail::target_factor(f, target), config.inner_iters, config.inner_tolerance);
}

/// Proximal weight used on H_view: tau2, plus lambda1 ||S_view||_2 / 2 when
/// convexification is on. The within term is the only source of negative
/// curvature, so the result makes the H-subproblem strictly convex.
inline double proximal_weight_H(const Problem& problem, std::size_t view, const PanlsConstants& c)
{
    double tau = c.tau2;
    if (c.convexify_h) {
        tau += 0.5 * problem.params().lambda1 * problem.within_norm(view);
    }
    return tau;
}

/// Proximal subproblem around `anchor` (tau1 for W, proximal_weight_H for H_I).
inline InnerResult panls_subproblem(const Problem& problem, const Factorization& f, Target target,
                                    const SolverConfig& config, const Matrix& anchor)
{
    const double tau = target.kind == Target::Kind::Basis ? config.panls.tau1
                                                          : proximal_weight_H(problem, target.view, config.panls);
    const auto sub = detail::target_subproblem(problem, f, target, tau, &anchor);
    return run_panls(sub, detail::target_factor(f, target), config.inner_iters, config.inner_tolerance, config.pg,
                     config.panls);
}

/// Runs the configured algorithm on a subproblem, without proximal terms.
/// MUR performs `max_iters` multiplicative steps (or stops early on `tol`).
inline InnerResult run_inner(Algorithm algorithm, const QuadraticSubproblem& sub, Matrix x, int max_iters, double tol,
                             const SolverConfig& config)
{
    switch (algorithm) {
    case Algorithm::MUR: {
        InnerResult res;
        while (res.iterations < max_iters && subproblem_projected_norm(sub, x) >= tol) {
            x = sub.mur_step(x);
            ++res.iterations;
        }
        res.x = std::move(x);
        return res;
    }
    case Algorithm::PG: return run_pg(sub, std::move(x), max_iters, tol, config.pg);
    case Algorithm::Ne: return run_ne(sub, std::move(x), max_iters, tol);
    case Algorithm::PANLS: return run_panls(sub, std::move(x), max_iters, tol, config.pg, config.panls);
    }
    return {};
}

/// Product-preserving rescaling: row k of every H_I is divided by s_k and
/// column k of W multiplied by s_k, where s_k is the Euclidean norm of row k
/// of the concatenation [H_1 ... H_N]. Afterwards the joint H rows have unit
/// norm and every W H_I is unchanged.
inline void normalize_rows(Factorization& f)
{
    const Index r = f.W.cols();
    for (Index k = 0; k < r; ++k) {
        double sq = 0.0;
        for (const auto& h : f.H) {
            sq += h.row(k).squaredNorm();
        }
        const double s = std::sqrt(sq);
        if (!(s > 0.0) || !std::isfinite(s)) {
            continue;
        }
        for (auto& h : f.H) {
            h.row(k) /= s;
        }
        f.W.col(k) *= s;
    }
}

struct SolveResult {
    Factorization factors;
    SolverReport report;
};

/// Alternating minimization: W update, then H_1..H_N in view order using the
/// freshest factors, optional row normalization, then trace + stop check.
inline SolveResult solve(const Problem& problem, const SolverConfig& config, Factorization init)
{
    config.validate();
    problem.check_factors(init);
    detail::require(init.nonnegative(), "initial factors must be nonnegative");

    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();

    SolveResult out;
    Factorization& f = out.factors;
    f = std::move(init);
    SolverReport& report = out.report;

    report.initial_objective = objective_value(problem, f);
    report.initial_grad_norm = projected_gradient_norm(problem, f);
    std::optional<StopState> state;

    const bool proximal = config.algorithm == Algorithm::PANLS;
    const int K = config.inner_iters;
    const double tol = config.inner_tolerance;

    for (int t = 1; t <= config.max_outer_iters; ++t) {
        const Factorization anchor = proximal ? f : Factorization{};
        TraceEntry entry;
        entry.iteration = t;

        {
            const auto sub = proximal ? w_subproblem(problem, f, config.panls.tau1, &anchor.W) : w_subproblem(problem, f);
            entry.w_subproblem_before = sub.value(f.W);
            InnerResult res;
            switch (config.algorithm) {
            case Algorithm::MUR: res.x = sub.mur_step(f.W); break;
            case Algorithm::PG: res = run_pg(sub, f.W, K, tol, config.pg); break;
            case Algorithm::Ne: res = run_ne(sub, f.W, K, tol); break;
            case Algorithm::PANLS: res = run_panls(sub, f.W, K, tol, config.pg, config.panls); break;
            }
            report.armijo_exhausted += res.armijo_exhausted ? 1 : 0;
            f.W = std::move(res.x);
            entry.w_subproblem_after = sub.value(f.W);
        }

        for (std::size_t v = 0; v < problem.num_views(); ++v) {
            const auto sub = proximal ? h_subproblem(problem, f, v, proximal_weight_H(problem, v, config.panls), &anchor.H[v])
                                      : h_subproblem(problem, f, v);
            InnerResult res;
            switch (config.algorithm) {
            case Algorithm::MUR: res.x = sub.mur_step(f.H[v]); break;
            case Algorithm::PG: res = run_pg(sub, f.H[v], K, tol, config.pg); break;
            case Algorithm::Ne: res = run_ne(sub, f.H[v], K, tol); break;
            case Algorithm::PANLS: res = run_panls(sub, f.H[v], K, tol, config.pg, config.panls); break;
            }
            report.armijo_exhausted += res.armijo_exhausted ? 1 : 0;
            f.H[v] = std::move(res.x);
        }

        if (config.normalize_rows) {
            normalize_rows(f);
        }

        entry.objective = objective_value(problem, f);
        entry.grad_norm = projected_gradient_norm(problem, f);
        entry.seconds = std::chrono::duration<double>(clock::now() - t0).count();
        report.trace.push_back(entry);
        report.iterations = t;

        if (!std::isfinite(entry.objective) || !std::isfinite(entry.grad_norm)) {
            report.termination = Termination::Diverged;
            break;
        }

        // F^1 and ||grad^1|| come from the first outer iteration; the
        // objective ratio needs two iterates, the gradient rule applies at once.
        const bool first = !state;
        if (first) {
            state.emplace(entry.objective, entry.grad_norm);
        }
        bool stop = false;
        if (config.stop_rule == StopRule::ObjectiveRatio) {
            if (!first && check_stop_objective(*state, entry.objective, config.tolerance)) {
                report.termination = Termination::ToleranceMet;
                stop = true;
            }
        } else {
            switch (gradient_stop_reason(*state, entry.grad_norm, config.tolerance)) {
            case GradientStop::RatioMet:
                report.termination = Termination::ToleranceMet;
                stop = true;
                break;
            case GradientStop::SlowChange:
                report.termination = Termination::SlowGradientChange;
                stop = true;
                break;
            case GradientStop::Continue: break;
            }
        }
        state->previous_objective = entry.objective;
        if (stop) {
            break;
        }
        if (t == config.max_outer_iters) {
            report.termination = Termination::MaxIters;
        }
    }

    report.final_objective = report.trace.back().objective;
    report.reconstruction_error = reconstruction_error(problem, f);
    return out;
}

/// Initializes from `config.seed` and solves.
inline SolveResult solve(const Problem& problem, const SolverConfig& config)
{
    return solve(problem, config, init_factors(problem, config.seed));
}

} // namespace jmf
