#pragma once

#include "jmf/model.hpp"
#include "jmf/objective.hpp"

#include <memory>
#include <utility>

namespace jmf {

/// Bound-constrained quadratic in a single factor X (W or one H_I):
///
///   f(X) = 1/2 <X, Q X> - <C, X> + offset,   Q X = left X + X right,
///
/// with left and right symmetric (either may be empty). Every W- and
/// H_I-subproblem of the alternating scheme, with or without the proximal
/// term, has this form.
class QuadraticSubproblem {
public:
    /// `right` is used as right_scale * (*right); sharing lets large n x n
    /// constraint sums stay uncopied.
    QuadraticSubproblem(Matrix left, std::shared_ptr<const Matrix> right, double right_scale, Matrix linear,
                        double offset, double lipschitz)
        : left_(std::move(left)), right_(std::move(right)), right_scale_(right_scale), linear_(std::move(linear)),
          offset_(offset), lipschitz_(lipschitz)
    {
        if (right_ && right_->size() == 0) {
            right_.reset();
        }
    }

    Index rows() const { return linear_.rows(); }
    Index cols() const { return linear_.cols(); }
    const Matrix& linear() const { return linear_; }
    double offset() const { return offset_; }

    /// Upper bound on the gradient's Lipschitz constant, ||left||_2 + ||right||_2.
    double lipschitz() const { return lipschitz_; }

    Matrix apply(const Matrix& d) const
    {
        Matrix out = Matrix::Zero(d.rows(), d.cols());
        if (left_.size() > 0) {
            out.noalias() += left_ * d;
        }
        if (right_) {
            out.noalias() += right_scale_ * (d * *right_);
        }
        return out;
    }

    Matrix gradient(const Matrix& x) const { return apply(x) - linear_; }

    /// <D, Q D>
    double curvature(const Matrix& d) const { return apply(d).cwiseProduct(d).sum(); }

    double value(const Matrix& x) const
    {
        return 0.5 * apply(x).cwiseProduct(x).sum() - linear_.cwiseProduct(x).sum() + offset_;
    }

    /// One multiplicative step: X <- X .* (C + Q^- X)/2 ./ ((Q^+ X)/2 + eps),
    /// where Q^+/Q^- hold the positive/negative operator entries. For the JMF
    /// subproblems this is exactly the KKT-derived update rule.
    Matrix mur_step(const Matrix& x, double eps = 1e-12) const
    {
        Matrix num = linear_;
        Matrix den = Matrix::Zero(x.rows(), x.cols());
        if (left_.size() > 0) {
            num.noalias() += (-left_).cwiseMax(0.0) * x;
            den.noalias() += left_.cwiseMax(0.0) * x;
        }
        if (right_) {
            const Matrix scaled = right_scale_ * *right_;
            num.noalias() += x * (-scaled).cwiseMax(0.0);
            den.noalias() += x * scaled.cwiseMax(0.0);
        }
        return (x.array() * (0.5 * num.array()) / (0.5 * den.array() + eps)).matrix();
    }

private:
    Matrix left_;
    std::shared_ptr<const Matrix> right_;
    double right_scale_ = 1.0;
    Matrix linear_;
    double offset_ = 0.0;
    double lipschitz_ = 0.0;
};

/// W-subproblem with H fixed:
///   sum_I ||X_I - W H_I||^2 + gamma1 ||W||^2 + tau1 ||W - anchor||^2.
/// `xs` and `hs` are paired by position, so any subset of views can be
/// passed (prediction from a partial set of test views).
inline QuadraticSubproblem make_w_subproblem(const std::vector<Matrix>& xs, const std::vector<Matrix>& hs,
                                             double gamma1, double tau1 = 0.0, const Matrix* anchor = nullptr)
{
    detail::require(!xs.empty() && xs.size() == hs.size(), "W-subproblem needs matching data and coefficient lists");
    const Index m = xs.front().rows();
    const Index r = hs.front().rows();
    Matrix gram = Matrix::Zero(r, r);
    Matrix linear = Matrix::Zero(m, r);
    double offset = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        detail::require(xs[i].rows() == m, "W-subproblem views disagree on row count");
        detail::require(hs[i].rows() == r && hs[i].cols() == xs[i].cols(),
                        "coefficient matrix " + std::to_string(i) + " is " + detail::shape_str(hs[i]) +
                            ", data has " + std::to_string(xs[i].cols()) + " columns");
        gram.noalias() += hs[i] * hs[i].transpose();
        linear.noalias() += 2.0 * xs[i] * hs[i].transpose();
        offset += xs[i].squaredNorm();
    }
    if (tau1 > 0.0) {
        detail::require(anchor != nullptr && anchor->rows() == m && anchor->cols() == r,
                        "proximal W-subproblem needs an anchor shaped like W");
        linear += 2.0 * tau1 * *anchor;
        offset += tau1 * anchor->squaredNorm();
    }
    Matrix right = 2.0 * gram;
    right.diagonal().array() += 2.0 * (gamma1 + tau1);
    const double lip = linalg::spectral_norm_symmetric(right);
    return QuadraticSubproblem(Matrix(), std::make_shared<const Matrix>(std::move(right)), 1.0, std::move(linear),
                               offset, lip);
}

inline QuadraticSubproblem w_subproblem(const Problem& problem, const Factorization& f, double tau1 = 0.0,
                                        const Matrix* anchor = nullptr)
{
    problem.check_factors(f);
    return make_w_subproblem(problem.dataset().views(), f.H, problem.params().gamma1, tau1, anchor);
}

/// H_I-subproblem with W and the other H_J fixed:
///   ||X_I - W H_I||^2 - lambda1 sum_t Tr(H_I Theta H_I^T) - lambda2 (between terms)
///   + gamma2 Tr(H_I^T 1 1^T H_I) + tau2 ||H_I - anchor||^2.
/// The data matrix may differ from the problem's view (prediction on test data).
inline QuadraticSubproblem make_h_subproblem(const Problem& problem, const Matrix& x, const Matrix& w,
                                             const std::vector<Matrix>& hs, std::size_t view, double tau2 = 0.0,
                                             const Matrix* anchor = nullptr)
{
    problem.check_view(view);
    const auto& p = problem.params();
    detail::require(x.rows() == w.rows() && x.cols() == problem.cols(view),
                    "H-subproblem data is " + detail::shape_str(x) + ", incompatible with W " + detail::shape_str(w));

    Matrix wtw = w.transpose() * w;
    Matrix left = 2.0 * wtw;
    left.array() += 2.0 * p.gamma2;
    const double lip_gram = linalg::spectral_norm_symmetric(left);
    left.diagonal().array() += 2.0 * tau2;

    Matrix linear = 2.0 * w.transpose() * x;
    double offset = x.squaredNorm();
    if (p.lambda2 != 0.0) {
        const Matrix pull = detail::between_pull(problem, hs, view);
        if (pull.size() > 0) {
            linear += p.lambda2 * pull;
        }
    }
    if (tau2 > 0.0) {
        detail::require(anchor != nullptr && anchor->rows() == linear.rows() && anchor->cols() == linear.cols(),
                        "proximal H-subproblem needs an anchor shaped like H_" + std::to_string(view));
        linear += 2.0 * tau2 * *anchor;
        offset += tau2 * anchor->squaredNorm();
    }

    std::shared_ptr<const Matrix> right;
    double lip = lip_gram + 2.0 * tau2;
    if (p.lambda1 != 0.0 && problem.has_within(view)) {
        right = problem.within_sum_shared(view);
        lip += p.lambda1 * problem.within_norm(view);
    }
    return QuadraticSubproblem(std::move(left), std::move(right), -p.lambda1, std::move(linear), offset, lip);
}

inline QuadraticSubproblem h_subproblem(const Problem& problem, const Factorization& f, std::size_t view,
                                        double tau2 = 0.0, const Matrix* anchor = nullptr)
{
    problem.check_factors(f);
    return make_h_subproblem(problem, problem.dataset().view(view), f.W, f.H, view, tau2, anchor);
}

} // namespace jmf
