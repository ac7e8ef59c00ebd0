#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace jmf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Thrown on shape mismatches, negative data and other precondition failures.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

namespace detail {

inline std::string shape_str(const Matrix& m)
{
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline void require(bool cond, const std::string& what)
{
    if (!cond) {
        throw InvalidArgument(what);
    }
}

inline void require_nonnegative(const Matrix& m, const std::string& what)
{
    if (!m.allFinite()) {
        throw InvalidArgument(what + " contains non-finite entries");
    }
    if (m.size() > 0 && m.minCoeff() < 0.0) {
        throw InvalidArgument(what + " contains negative entries");
    }
}

} // namespace detail

/// N nonnegative views X_I that share the same m rows (objects).
class MultiViewDataset {
public:
    MultiViewDataset() = default;

    explicit MultiViewDataset(std::vector<Matrix> views) : views_(std::move(views))
    {
        detail::require(!views_.empty(), "dataset needs at least one view");
        const Index m = views_.front().rows();
        for (std::size_t i = 0; i < views_.size(); ++i) {
            const auto name = "view " + std::to_string(i);
            detail::require(views_[i].rows() == m, name + " has " + std::to_string(views_[i].rows()) +
                                                       " rows, expected " + std::to_string(m));
            detail::require(views_[i].cols() > 0, name + " has no columns");
            detail::require_nonnegative(views_[i], name);
        }
        detail::require(m > 0, "views have no rows");
    }

    std::size_t num_views() const { return views_.size(); }
    Index rows() const { return views_.empty() ? 0 : views_.front().rows(); }
    Index cols(std::size_t view) const { return views_.at(view).cols(); }
    const Matrix& view(std::size_t i) const { return views_.at(i); }
    const std::vector<Matrix>& views() const { return views_; }

    std::vector<Index> column_counts() const
    {
        std::vector<Index> n;
        n.reserve(views_.size());
        for (const auto& x : views_) {
            n.push_back(x.cols());
        }
        return n;
    }

private:
    std::vector<Matrix> views_;
};

/// Ordered view pair (I, J), I != J, keying a between-view matrix R_IJ.
using ViewPair = std::pair<std::size_t, std::size_t>;

/// Within-view must-link matrices Theta_I^(t) and between-view matrices R_IJ.
/// Any of them may be missing.
struct ConstraintSet {
    std::vector<std::vector<Matrix>> within;
    std::map<ViewPair, Matrix> between;

    bool empty() const
    {
        for (const auto& w : within) {
            if (!w.empty()) {
                return false;
            }
        }
        return between.empty();
    }

    const std::vector<Matrix>& within_for(std::size_t view) const
    {
        static const std::vector<Matrix> none;
        return view < within.size() ? within[view] : none;
    }
};

struct Hyperparameters {
    Index rank = 1;
    double lambda1 = 0.0; ///< within-constraint weight
    double lambda2 = 0.0; ///< between-constraint weight
    double gamma1 = 0.0;  ///< scale penalty on W
    double gamma2 = 0.0;  ///< column-wise l1^2 sparsity penalty on each H_I

    void validate() const
    {
        detail::require(rank >= 1, "rank must be >= 1");
        for (double w : {lambda1, lambda2, gamma1, gamma2}) {
            detail::require(std::isfinite(w) && w >= 0.0, "regularization weights must be finite and >= 0");
        }
    }
};

/// Shared basis W (m x r) and per-view coefficients H_I (r x n_I).
struct Factorization {
    Matrix W;
    std::vector<Matrix> H;

    bool nonnegative() const
    {
        if (W.size() > 0 && W.minCoeff() < 0.0) {
            return false;
        }
        for (const auto& h : H) {
            if (h.size() > 0 && h.minCoeff() < 0.0) {
                return false;
            }
        }
        return true;
    }
};

enum class Algorithm { MUR, PG, Ne, PANLS };
enum class StopRule { ObjectiveRatio, GradientRatio };
enum class Termination { ToleranceMet, SlowGradientChange, MaxIters, Diverged };

inline const char* to_string(Algorithm a)
{
    switch (a) {
    case Algorithm::MUR: return "MUR";
    case Algorithm::PG: return "PG";
    case Algorithm::Ne: return "Ne";
    case Algorithm::PANLS: return "PANLS";
    }
    return "?";
}

inline const char* to_string(StopRule s)
{
    return s == StopRule::ObjectiveRatio ? "ObjectiveRatio" : "GradientRatio";
}

inline const char* to_string(Termination t)
{
    switch (t) {
    case Termination::ToleranceMet: return "ToleranceMet";
    case Termination::SlowGradientChange: return "SlowGradientChange";
    case Termination::MaxIters: return "MaxIters";
    case Termination::Diverged: return "Diverged";
    }
    return "?";
}

inline Algorithm parse_algorithm(const std::string& s)
{
    if (s == "MUR") return Algorithm::MUR;
    if (s == "PG") return Algorithm::PG;
    if (s == "Ne") return Algorithm::Ne;
    if (s == "PANLS") return Algorithm::PANLS;
    throw InvalidArgument("unknown algorithm '" + s + "' (expected MUR, PG, Ne or PANLS)");
}

inline StopRule parse_stop_rule(const std::string& s)
{
    if (s == "ObjectiveRatio" || s == "Stop1") return StopRule::ObjectiveRatio;
    if (s == "GradientRatio" || s == "Stop2") return StopRule::GradientRatio;
    throw InvalidArgument("unknown stop rule '" + s + "' (expected ObjectiveRatio/Stop1 or GradientRatio/Stop2)");
}

struct PgConstants {
    double sigma = 0.01;  ///< sufficient-decrease fraction
    double beta = 0.1;    ///< step shrink factor
    double alpha0 = 1.0;  ///< first trial step
    int max_backtracks = 50;
};

struct PanlsConstants {
    double eta = 0.1;
    double alpha = 1.0;   ///< exponent in the undecided-set gradient test
    double beta = 0.1;    ///< exponent in the undecided-set value test
    double rho = 0.5;
    int n1 = 2;
    int n2 = 1;
    double tau1 = 1e-3;   ///< proximal weight on W
    double tau2 = 1e-3;   ///< proximal weight on each H_I
    /// Add lambda1 ||sum_t Theta + Theta^T||_2 / 2 to tau2 per view so every
    /// proximal H_I-subproblem stays strictly convex.
    bool convexify_h = true;
};

struct SolverConfig {
    Algorithm algorithm = Algorithm::PANLS;
    StopRule stop_rule = StopRule::ObjectiveRatio;
    double tolerance = 1e-6;
    int max_outer_iters = 2000;
    int inner_iters = 500;
    /// Absolute projected-gradient tolerance that ends an inner subproblem solve.
    double inner_tolerance = 1e-6;
    std::uint64_t seed = 0;
    bool normalize_rows = true;
    PgConstants pg;
    PanlsConstants panls;

    void validate() const
    {
        detail::require(std::isfinite(tolerance) && tolerance > 0.0, "tolerance must be > 0");
        detail::require(max_outer_iters >= 1, "max_outer_iters must be >= 1");
        detail::require(inner_iters >= 1, "inner_iters must be >= 1");
        detail::require(inner_tolerance >= 0.0, "inner_tolerance must be >= 0");
        detail::require(pg.sigma > 0.0 && pg.sigma < 1.0, "PG sigma must lie in (0,1)");
        detail::require(pg.beta > 0.0 && pg.beta < 1.0, "PG beta must lie in (0,1)");
        detail::require(pg.alpha0 > 0.0, "PG alpha0 must be > 0");
        detail::require(pg.max_backtracks >= 1, "PG max_backtracks must be >= 1");
        detail::require(panls.rho > 0.0 && panls.rho < 1.0, "PANLS rho must lie in (0,1)");
        detail::require(panls.beta > 0.0 && panls.beta < 1.0, "PANLS beta must lie in (0,1)");
        detail::require(panls.eta > 0.0, "PANLS eta must be > 0");
        detail::require(panls.n1 >= 0 && panls.n2 >= 0, "PANLS n1/n2 must be >= 0");
        detail::require(panls.tau1 >= 0.0 && panls.tau2 >= 0.0, "PANLS proximal weights must be >= 0");
    }
};

struct TraceEntry {
    int iteration = 0;
    double objective = 0.0;
    double grad_norm = 0.0; ///< projected gradient norm over W and all H_I
    double seconds = 0.0;   ///< cumulative wall time of the solve loop
    /// W-subproblem objective right before and after this iteration's W update.
    double w_subproblem_before = 0.0;
    double w_subproblem_after = 0.0;
};

struct SolverReport {
    std::vector<TraceEntry> trace;
    Termination termination = Termination::MaxIters;
    /// At the starting factors, before the first outer iteration.
    double initial_objective = 0.0;
    double initial_grad_norm = 0.0;
    double final_objective = 0.0;
    double reconstruction_error = 0.0;
    int iterations = 0;
    /// Number of inner steps where the Armijo search ran out of backtracks.
    int armijo_exhausted = 0;
};

/// Immutable binding of data, constraints and weights. Cheap to copy; the
/// payload is shared. Per-view sums of Theta + Theta^T and their spectral
/// norms are cached at construction.
class Problem {
public:
    Problem(MultiViewDataset dataset, ConstraintSet constraints, Hyperparameters params);

    const MultiViewDataset& dataset() const { return data_->dataset; }
    const ConstraintSet& constraints() const { return data_->constraints; }
    const Hyperparameters& params() const { return data_->params; }
    std::size_t num_views() const { return data_->dataset.num_views(); }
    Index rows() const { return data_->dataset.rows(); }
    Index rank() const { return data_->params.rank; }
    Index cols(std::size_t view) const { return data_->dataset.cols(view); }

    /// Sum over t of Theta_I^(t) + Theta_I^(t)^T, or an empty matrix when view I has none.
    const Matrix& within_sum(std::size_t view) const { return *data_->within_sums.at(view); }
    std::shared_ptr<const Matrix> within_sum_shared(std::size_t view) const { return data_->within_sums.at(view); }
    /// Spectral norm of within_sum(view); 0 when absent.
    double within_norm(std::size_t view) const { return data_->within_norms.at(view); }
    bool has_within(std::size_t view) const { return data_->within_sums.at(view)->size() > 0; }

    /// Squared Frobenius norms of the views, summed.
    double data_energy() const { return data_->energy; }

    /// Non-fatal issues found at construction (e.g. rank above min(m, n_I)).
    const std::vector<std::string>& warnings() const { return data_->warnings; }

    /// Same data and constraints, different weights.
    Problem with_params(const Hyperparameters& params) const
    {
        return Problem(dataset(), constraints(), params);
    }

    void check_factors(const Factorization& f) const
    {
        detail::require(f.W.rows() == rows() && f.W.cols() == rank(),
                        "W is " + detail::shape_str(f.W) + ", expected " + std::to_string(rows()) + "x" +
                            std::to_string(rank()));
        detail::require(f.H.size() == num_views(), "factorization has " + std::to_string(f.H.size()) +
                                                       " coefficient matrices, expected " +
                                                       std::to_string(num_views()));
        for (std::size_t i = 0; i < num_views(); ++i) {
            detail::require(f.H[i].rows() == rank() && f.H[i].cols() == cols(i),
                            "H_" + std::to_string(i) + " is " + detail::shape_str(f.H[i]) + ", expected " +
                                std::to_string(rank()) + "x" + std::to_string(cols(i)));
        }
    }

    void check_view(std::size_t view) const
    {
        detail::require(view < num_views(), "unknown view index " + std::to_string(view));
    }

private:
    struct Data {
        MultiViewDataset dataset;
        ConstraintSet constraints;
        Hyperparameters params;
        std::vector<std::shared_ptr<const Matrix>> within_sums;
        std::vector<double> within_norms;
        double energy = 0.0;
        std::vector<std::string> warnings;
    };
    std::shared_ptr<const Data> data_;
};

namespace linalg {

/// Largest absolute eigenvalue of a symmetric matrix by power iteration.
/// The estimate ||A v|| / ||v|| stays valid when +lambda and -lambda are both
/// extremal, so no sign handling is needed.
inline double spectral_norm_symmetric(const Matrix& a, double tol = 1e-8, int max_iters = 1000)
{
    if (a.size() == 0) {
        return 0.0;
    }
    const Index n = a.rows();
    Vector v(n);
    for (Index i = 0; i < n; ++i) {
        // Non-constant start so symmetric test matrices do not hide the top eigenvector.
        v[i] = 1.0 + 0.01 * static_cast<double>(i % 97);
    }
    v.normalize();
    double estimate = 0.0;
    for (int it = 0; it < max_iters; ++it) {
        Vector w = a * v;
        const double norm = w.norm();
        if (norm == 0.0) {
            return 0.0;
        }
        const double prev = estimate;
        estimate = norm;
        v = w / norm;
        if (it > 0 && std::abs(estimate - prev) <= tol * estimate) {
            break;
        }
    }
    return estimate;
}

} // namespace linalg

inline Problem::Problem(MultiViewDataset dataset, ConstraintSet constraints, Hyperparameters params)
{
    params.validate();
    detail::require(dataset.num_views() >= 1, "dataset needs at least one view");
    const std::size_t n_views = dataset.num_views();

    detail::require(constraints.within.size() <= n_views,
                    "within constraints given for " + std::to_string(constraints.within.size()) +
                        " views, dataset has " + std::to_string(n_views));
    constraints.within.resize(n_views);

    auto data = std::make_shared<Data>();
    for (std::size_t i = 0; i < n_views; ++i) {
        const Index n = dataset.cols(i);
        Matrix sum;
        for (std::size_t t = 0; t < constraints.within[i].size(); ++t) {
            const Matrix& theta = constraints.within[i][t];
            const auto name = "Theta_" + std::to_string(i) + "^(" + std::to_string(t) + ")";
            detail::require(theta.rows() == n && theta.cols() == n,
                            name + " is " + detail::shape_str(theta) + ", expected " + std::to_string(n) + "x" +
                                std::to_string(n));
            detail::require_nonnegative(theta, name);
            if (sum.size() == 0) {
                sum = Matrix::Zero(n, n);
            }
            sum += theta + theta.transpose();
        }
        data->within_norms.push_back(linalg::spectral_norm_symmetric(sum));
        data->within_sums.push_back(std::make_shared<const Matrix>(std::move(sum)));
    }
    for (const auto& [key, r] : constraints.between) {
        const auto [i, j] = key;
        const auto name = "R_" + std::to_string(i) + "_" + std::to_string(j);
        detail::require(i < n_views && j < n_views, name + " refers to a missing view");
        detail::require(i != j, name + " must relate two different views");
        detail::require(r.rows() == dataset.cols(i) && r.cols() == dataset.cols(j),
                        name + " is " + detail::shape_str(r) + ", expected " + std::to_string(dataset.cols(i)) +
                            "x" + std::to_string(dataset.cols(j)));
        detail::require_nonnegative(r, name);
    }

    Index min_dim = dataset.rows();
    for (std::size_t i = 0; i < n_views; ++i) {
        min_dim = std::min(min_dim, dataset.cols(i));
        data->energy += dataset.view(i).squaredNorm();
    }
    if (params.rank > min_dim) {
        data->warnings.push_back("rank " + std::to_string(params.rank) + " exceeds min(m, n_I) = " +
                                 std::to_string(min_dim));
    }

    data->dataset = std::move(dataset);
    data->constraints = std::move(constraints);
    data->params = params;
    data_ = std::move(data);
}

/// Uniform(0,1) draws for W and every H_I, then each column of each H_I is
/// scaled to unit Euclidean norm. Deterministic given the seed.
inline Factorization init_factors(const Problem& problem, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    auto fill = [&](Matrix& m) {
        // Column-major fill order is part of the determinism contract.
        for (Index j = 0; j < m.cols(); ++j) {
            for (Index i = 0; i < m.rows(); ++i) {
                m(i, j) = unif(rng);
            }
        }
    };

    Factorization f;
    f.W.resize(problem.rows(), problem.rank());
    fill(f.W);
    f.H.reserve(problem.num_views());
    for (std::size_t v = 0; v < problem.num_views(); ++v) {
        Matrix h(problem.rank(), problem.cols(v));
        fill(h);
        for (Index j = 0; j < h.cols(); ++j) {
            const double norm = h.col(j).norm();
            if (norm > 0.0) {
                h.col(j) /= norm;
            }
        }
        f.H.push_back(std::move(h));
    }
    return f;
}

} // namespace jmf
