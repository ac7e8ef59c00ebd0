#pragma once

#include "jmf/model.hpp"

#include <cmath>
#include <vector>

namespace jmf {

struct GradientPair {
    Matrix grad_W;
    std::vector<Matrix> grad_H;
};

namespace detail {

/// Sum of squared entries of the projected gradient: entries at the zero
/// bound only count the descent part min(g, 0).
inline double projected_sq_norm(const Matrix& x, const Matrix& g)
{
    double sum = 0.0;
    const Index n = x.size();
    const double* xp = x.data();
    const double* gp = g.data();
    for (Index i = 0; i < n; ++i) {
        const double v = xp[i] > 0.0 ? gp[i] : std::min(gp[i], 0.0);
        sum += v * v;
    }
    return sum;
}

/// Gradient restricted to strictly positive entries (the inactive set).
inline double interior_sq_norm(const Matrix& x, const Matrix& g)
{
    double sum = 0.0;
    const Index n = x.size();
    const double* xp = x.data();
    const double* gp = g.data();
    for (Index i = 0; i < n; ++i) {
        if (xp[i] > 0.0) {
            sum += gp[i] * gp[i];
        }
    }
    return sum;
}

/// sum_I H_I H_I^T
inline Matrix gram_H(const std::vector<Matrix>& hs, Index rank)
{
    Matrix g = Matrix::Zero(rank, rank);
    for (const auto& h : hs) {
        g.noalias() += h * h.transpose();
    }
    return g;
}

/// Derivative of sum over stored pairs of Tr(H_I R_IJ H_J^T) with respect to
/// H_view: H_J R_IJ^T for stored (view, J) and H_J R_JI for stored (J, view).
/// Returns an empty matrix when no stored pair touches the view.
inline Matrix between_pull(const Problem& problem, const std::vector<Matrix>& hs, std::size_t view)
{
    Matrix acc;
    for (const auto& [key, r] : problem.constraints().between) {
        const auto [i, j] = key;
        if (i != view && j != view) {
            continue;
        }
        if (acc.size() == 0) {
            acc = Matrix::Zero(problem.rank(), problem.cols(view));
        }
        if (i == view) {
            acc.noalias() += hs[j] * r.transpose();
        }
        if (j == view) {
            acc.noalias() += hs[i] * r;
        }
    }
    return acc;
}

/// (1 1^T) H: every row equals the column sums of H.
inline Matrix ones_times(const Matrix& h)
{
    return Matrix::Ones(h.rows(), 1) * h.colwise().sum();
}

} // namespace detail

/// sum_I ||X_I - W H_I||_F^2
inline double reconstruction_error(const Problem& problem, const Factorization& f)
{
    problem.check_factors(f);
    double err = 0.0;
    for (std::size_t i = 0; i < problem.num_views(); ++i) {
        err += (problem.dataset().view(i) - f.W * f.H[i]).squaredNorm();
    }
    return err;
}

/// Full JMF objective: reconstruction, minus weighted within and between
/// must-link rewards, plus the W scale penalty and the column l1^2 sparsity
/// penalty (evaluated as Tr(H^T 1 1^T H), which equals sum_j ||h_j||_1^2 for
/// nonnegative H).
inline double objective_value(const Problem& problem, const Factorization& f)
{
    const auto& p = problem.params();
    double value = reconstruction_error(problem, f);

    if (p.lambda1 != 0.0) {
        double within = 0.0;
        for (std::size_t i = 0; i < problem.num_views(); ++i) {
            if (problem.has_within(i)) {
                // sum_t Tr(H Theta H^T) = 0.5 Tr(H (Theta + Theta^T) H^T)
                within += 0.5 * (f.H[i] * problem.within_sum(i)).cwiseProduct(f.H[i]).sum();
            }
        }
        value -= p.lambda1 * within;
    }
    if (p.lambda2 != 0.0) {
        double between = 0.0;
        for (const auto& [key, r] : problem.constraints().between) {
            between += (f.H[key.first] * r).cwiseProduct(f.H[key.second]).sum();
        }
        value -= p.lambda2 * between;
    }
    value += p.gamma1 * f.W.squaredNorm();
    if (p.gamma2 != 0.0) {
        double sparsity = 0.0;
        for (const auto& h : f.H) {
            sparsity += h.colwise().sum().squaredNorm();
        }
        value += p.gamma2 * sparsity;
    }
    return value;
}

/// 2 sum_I (W H_I H_I^T - X_I H_I^T) + 2 gamma1 W
inline Matrix grad_W(const Problem& problem, const Factorization& f)
{
    problem.check_factors(f);
    Matrix g = 2.0 * problem.params().gamma1 * f.W;
    for (std::size_t i = 0; i < problem.num_views(); ++i) {
        g.noalias() += 2.0 * (f.W * (f.H[i] * f.H[i].transpose()) - problem.dataset().view(i) * f.H[i].transpose());
    }
    return g;
}

/// -2 W^T X_I + 2 W^T W H_I - lambda1 H_I sum_t (Theta + Theta^T)
///   - lambda2 (between pull) + 2 gamma2 (1 1^T) H_I
inline Matrix grad_H(const Problem& problem, const Factorization& f, std::size_t view)
{
    problem.check_view(view);
    problem.check_factors(f);
    const auto& p = problem.params();
    const Matrix& h = f.H[view];

    Matrix g = 2.0 * ((f.W.transpose() * f.W) * h - f.W.transpose() * problem.dataset().view(view));
    if (p.lambda1 != 0.0 && problem.has_within(view)) {
        g.noalias() -= p.lambda1 * (h * problem.within_sum(view));
    }
    if (p.lambda2 != 0.0) {
        const Matrix pull = detail::between_pull(problem, f.H, view);
        if (pull.size() > 0) {
            g -= p.lambda2 * pull;
        }
    }
    if (p.gamma2 != 0.0) {
        g += 2.0 * p.gamma2 * detail::ones_times(h);
    }
    return g;
}

inline GradientPair gradients(const Problem& problem, const Factorization& f)
{
    GradientPair out;
    out.grad_W = grad_W(problem, f);
    out.grad_H.reserve(problem.num_views());
    for (std::size_t i = 0; i < problem.num_views(); ++i) {
        out.grad_H.push_back(grad_H(problem, f, i));
    }
    return out;
}

/// Frobenius norm of the projected gradient over W and every H_I. At entries
/// equal to zero the gradient is replaced by min(gradient, 0), so the value
/// vanishes exactly at KKT points.
inline double projected_gradient_norm(const Problem& problem, const Factorization& f)
{
    const GradientPair g = gradients(problem, f);
    double sq = detail::projected_sq_norm(f.W, g.grad_W);
    for (std::size_t i = 0; i < problem.num_views(); ++i) {
        sq += detail::projected_sq_norm(f.H[i], g.grad_H[i]);
    }
    return std::sqrt(sq);
}

/// 2 || sum_I H_I H_I^T + gamma1 I ||_2
inline double lipschitz_W(const Problem& problem, const Factorization& f)
{
    Matrix g = detail::gram_H(f.H, problem.rank());
    g.diagonal().array() += problem.params().gamma1;
    return 2.0 * linalg::spectral_norm_symmetric(g);
}

/// 2 || W^T W + gamma2 1 1^T ||_2 + lambda1 || sum_t Theta + Theta^T ||_2
inline double lipschitz_H(const Problem& problem, const Factorization& f, std::size_t view)
{
    problem.check_view(view);
    const auto& p = problem.params();
    Matrix g = f.W.transpose() * f.W;
    g.array() += p.gamma2;
    double l = 2.0 * linalg::spectral_norm_symmetric(g);
    if (problem.has_within(view)) {
        l += p.lambda1 * problem.within_norm(view);
    }
    return l;
}

/// vec(D)^T Q_W vec(D) for the W Hessian (plus the optional proximal weight):
/// 2 Tr(D (sum_I H_I H_I^T + (gamma1 + tau1) I) D^T).
inline double hessian_quadratic_form_W(const Problem& problem, const Factorization& f, const Matrix& d,
                                       double tau1 = 0.0)
{
    detail::require(d.rows() == problem.rows() && d.cols() == problem.rank(),
                    "direction is " + detail::shape_str(d) + ", expected the shape of W");
    const Matrix g = detail::gram_H(f.H, problem.rank());
    return 2.0 * ((d * g).cwiseProduct(d).sum() + (problem.params().gamma1 + tau1) * d.squaredNorm());
}

/// vec(D)^T Q_H vec(D) for the H_I Hessian (plus the optional proximal weight):
/// 2 ||W D||^2 + 2 gamma2 sum_j (1^T d_j)^2 - lambda1 Tr(D S D^T) + 2 tau2 ||D||^2
/// with S = sum_t Theta + Theta^T. The gamma2 part uses the all-ones operator,
/// matching the gradient.
inline double hessian_quadratic_form_H(const Problem& problem, const Factorization& f, std::size_t view,
                                       const Matrix& d, double tau2 = 0.0)
{
    problem.check_view(view);
    detail::require(d.rows() == problem.rank() && d.cols() == problem.cols(view),
                    "direction is " + detail::shape_str(d) + ", expected the shape of H_" + std::to_string(view));
    const auto& p = problem.params();
    double q = 2.0 * (f.W * d).squaredNorm();
    q += 2.0 * p.gamma2 * d.colwise().sum().squaredNorm();
    if (p.lambda1 != 0.0 && problem.has_within(view)) {
        q -= p.lambda1 * (d * problem.within_sum(view)).cwiseProduct(d).sum();
    }
    q += 2.0 * tau2 * d.squaredNorm();
    return q;
}

} // namespace jmf
