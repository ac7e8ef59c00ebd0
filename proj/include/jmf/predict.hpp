#pragma once

#include "jmf/model.hpp"
#include "jmf/solvers.hpp"
#include "jmf/subproblem.hpp"

#include <optional>
#include <random>
#include <vector>

namespace jmf {

struct TrainedModel {
    Factorization factors;
    Hyperparameters params;
    Algorithm algorithm = Algorithm::PANLS;
    StopRule stop_rule = StopRule::ObjectiveRatio;
    std::uint64_t seed = 0;

    void validate() const
    {
        params.validate();
        detail::require(factors.W.cols() == params.rank, "model W has " + std::to_string(factors.W.cols()) +
                                                             " columns, rank is " + std::to_string(params.rank));
        detail::require(!factors.H.empty(), "model has no coefficient matrices");
        for (const auto& h : factors.H) {
            detail::require(h.rows() == params.rank, "model coefficient matrix has the wrong row count");
        }
        detail::require(factors.nonnegative(), "model factors must be nonnegative");
    }
};

/// Inner-solver settings for prediction. The algorithm defaults to the one the
/// model was trained with.
struct PredictConfig {
    std::optional<Algorithm> algorithm;
    int max_iters = 5000;
    double tolerance = 1e-10;
    std::uint64_t seed = 0;
    /// Outer sweeps over the views for predict_right; each H_I subproblem
    /// depends on the others only through between-view constraints.
    int sweeps = 50;
    PgConstants pg;
    PanlsConstants panls;
};

namespace detail {

inline SolverConfig inner_config(const PredictConfig& c)
{
    SolverConfig s;
    s.pg = c.pg;
    s.panls = c.panls;
    return s;
}

inline Matrix uniform_start(Index rows, Index cols, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j) {
        for (Index i = 0; i < rows; ++i) {
            m(i, j) = u(rng);
        }
    }
    return m;
}

} // namespace detail

/// JMF/L core: fit W_hat on test views with the given coefficient matrices
/// frozen. `views[i]` pairs with `hs[i]`.
inline Matrix fit_basis(const std::vector<Matrix>& views, const std::vector<Matrix>& hs, double gamma1,
                        Algorithm algorithm, const PredictConfig& config)
{
    detail::require(!views.empty(), "no test views supplied");
    for (std::size_t i = 0; i < views.size(); ++i) {
        detail::require_nonnegative(views[i], "test view " + std::to_string(i));
    }
    const auto sub = make_w_subproblem(views, hs, gamma1);
    Matrix start = detail::uniform_start(views.front().rows(), hs.front().rows(), config.seed);
    return run_inner(algorithm, sub, std::move(start), config.max_iters, config.tolerance,
                     detail::inner_config(config))
        .x;
}

/// JMF/L: W_hat for test data covering every view (views in model order).
inline Matrix predict_left(const TrainedModel& model, const MultiViewDataset& test, const PredictConfig& config = {})
{
    model.validate();
    detail::require(test.num_views() == model.factors.H.size(),
                    "test set has " + std::to_string(test.num_views()) + " views, model has " +
                        std::to_string(model.factors.H.size()));
    for (std::size_t i = 0; i < test.num_views(); ++i) {
        detail::require(test.cols(i) == model.factors.H[i].cols(),
                        "test view " + std::to_string(i) + " has " + std::to_string(test.cols(i)) +
                            " columns, model expects " + std::to_string(model.factors.H[i].cols()));
    }
    return fit_basis(test.views(), model.factors.H, model.params.gamma1, config.algorithm.value_or(model.algorithm),
                     config);
}

/// Row-wise argmax of W_hat; ties resolve to the lowest column index.
inline std::vector<Index> predict_class(const Matrix& w_hat)
{
    detail::require(w_hat.size() > 0, "empty basis matrix");
    std::vector<Index> out(w_hat.rows());
    for (Index i = 0; i < w_hat.rows(); ++i) {
        Index best = 0;
        for (Index k = 1; k < w_hat.cols(); ++k) {
            if (w_hat(i, k) > w_hat(i, best)) {
                best = k;
            }
        }
        out[i] = best;
    }
    return out;
}

/// JMF/L scenario II: reconstruct the held-out view `target` from the other
/// views. `others` must list every view except `target`, in model order.
inline Matrix predict_view(const TrainedModel& model, std::size_t target, const std::vector<Matrix>& others,
                           const PredictConfig& config = {})
{
    model.validate();
    const std::size_t n_views = model.factors.H.size();
    detail::require(target < n_views, "unknown target view " + std::to_string(target));
    detail::require(n_views >= 2, "held-out view prediction needs at least two views");
    detail::require(others.size() == n_views - 1, "expected " + std::to_string(n_views - 1) +
                                                      " supplied views (all but the target), got " +
                                                      std::to_string(others.size()));
    std::vector<Matrix> hs;
    for (std::size_t v = 0, k = 0; v < n_views; ++v) {
        if (v == target) {
            continue;
        }
        detail::require(others[k].cols() == model.factors.H[v].cols(),
                        "supplied view for model view " + std::to_string(v) + " has " +
                            std::to_string(others[k].cols()) + " columns, expected " +
                            std::to_string(model.factors.H[v].cols()));
        hs.push_back(model.factors.H[v]);
        ++k;
    }
    const Matrix w_hat =
        fit_basis(others, hs, model.params.gamma1, config.algorithm.value_or(model.algorithm), config);
    return w_hat * model.factors.H[target];
}

/// X_hat for a fitted basis: W_hat H_target.
inline Matrix predict_view_from_basis(const TrainedModel& model, std::size_t target, const Matrix& w_hat)
{
    detail::require(target < model.factors.H.size(), "unknown target view " + std::to_string(target));
    return w_hat * model.factors.H[target];
}

/// JMF/R: H_hat_I on test data with W frozen. Constraints (when supplied)
/// must match the test views' column counts; Gauss-Seidel sweeps over views.
inline std::vector<Matrix> predict_right(const TrainedModel& model, const MultiViewDataset& test,
                                         const PredictConfig& config = {}, const ConstraintSet& constraints = {})
{
    model.validate();
    detail::require(test.rows() == model.factors.W.rows(), "test data has " + std::to_string(test.rows()) +
                                                               " rows, model W has " +
                                                               std::to_string(model.factors.W.rows()));
    const Problem problem(test, constraints, model.params);
    const Algorithm algorithm = config.algorithm.value_or(model.algorithm);
    const SolverConfig inner = detail::inner_config(config);

    std::vector<Matrix> hs;
    for (std::size_t v = 0; v < test.num_views(); ++v) {
        hs.push_back(detail::uniform_start(model.params.rank, test.cols(v), config.seed + v));
    }
    const bool coupled = !problem.constraints().between.empty();
    const int sweeps = coupled ? config.sweeps : 1;
    for (int s = 0; s < sweeps; ++s) {
        for (std::size_t v = 0; v < test.num_views(); ++v) {
            const auto sub = make_h_subproblem(problem, test.view(v), model.factors.W, hs, v);
            hs[v] = run_inner(algorithm, sub, std::move(hs[v]), config.max_iters, config.tolerance, inner).x;
        }
    }
    return hs;
}

} // namespace jmf
