#include "jmf/objective.hpp"

#include "helpers.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace jmf;
using jmf::testing::random_instance;
using jmf::testing::uniform_matrix;
using jmf::testing::weights;
using namespace jmf::testing::oracles;

namespace {

/// Central differences of the objective on a subset of coordinates of `target`.
template <class Select>
void check_fd(const Problem& problem, Factorization f, Select select, const Matrix& analytic, int samples,
              std::mt19937_64& rng)
{
    const double h = 1e-6;
    Matrix& target = select(f);
    std::uniform_int_distribution<Index> pick(0, target.size() - 1);
    for (int s = 0; s < samples; ++s) {
        const Index idx = pick(rng);
        const double orig = target.data()[idx];
        target.data()[idx] = orig + h;
        const double fp = objective_value(problem, f);
        target.data()[idx] = orig - h;
        const double fm = objective_value(problem, f);
        target.data()[idx] = orig;
        const double fd = (fp - fm) / (2.0 * h);
        const double g = analytic.data()[idx];
        EXPECT_LE(std::abs(fd - g), 1e-5 * std::max(1.0, std::abs(g))) << "coordinate " << idx;
    }
}

} // namespace

TEST(Objective, ZeroFactorsGiveDataEnergy)
{
    auto inst = random_instance(1, 5, {3, 4}, 2, weights(1.0, 2.0, 3.0, 4.0));
    Factorization zero{Matrix::Zero(5, 2), {Matrix::Zero(2, 3), Matrix::Zero(2, 4)}};
    EXPECT_NEAR(objective_value(inst.problem, zero), inst.problem.data_energy(), 1e-12);
}

TEST(Objective, ExactScalarFactorization)
{
    Problem problem(MultiViewDataset({Matrix::Ones(1, 1)}), ConstraintSet{}, Hyperparameters{});
    Factorization f{Matrix::Ones(1, 1), {Matrix::Ones(1, 1)}};
    EXPECT_EQ(objective_value(problem, f), 0.0);
    EXPECT_EQ(reconstruction_error(problem, f), 0.0);
}

TEST(Objective, ScalarReconstructionError)
{
    Problem problem(MultiViewDataset({Matrix::Constant(1, 1, 2.0)}), ConstraintSet{}, Hyperparameters{});
    Factorization f{Matrix::Ones(1, 1), {Matrix::Ones(1, 1)}};
    EXPECT_EQ(reconstruction_error(problem, f), 1.0);
    const Matrix g = grad_W(problem, f);
    EXPECT_EQ(g(0, 0), -2.0);
}

TEST(Objective, MatchesNaiveLoopOracle)
{
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto inst = random_instance(seed, 6, {4, 5, 3}, 2, weights(0.3, 0.7, 0.2, 0.4));
        const double expected = naive_objective(inst.problem, inst.factors);
        EXPECT_NEAR(objective_value(inst.problem, inst.factors), expected, 1e-10 * std::abs(expected));
    }
}

TEST(Objective, ZeroWeightsEqualReconstructionError)
{
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto inst = random_instance(seed, 6, {4, 5, 3}, 2, weights(0, 0, 0, 0));
        EXPECT_EQ(objective_value(inst.problem, inst.factors), reconstruction_error(inst.problem, inst.factors));
    }
}

TEST(Objective, MissingConstraintsAreSkipped)
{
    auto inst = random_instance(3, 4, {3, 3}, 2, weights(5.0, 5.0, 0, 0), false);
    EXPECT_NEAR(objective_value(inst.problem, inst.factors), reconstruction_error(inst.problem, inst.factors), 1e-12);
}

TEST(Gradient, ExactFactorizationIsStationary)
{
    std::mt19937_64 rng(2);
    const Matrix w = uniform_matrix(rng, 4, 2);
    const Matrix h = uniform_matrix(rng, 2, 3);
    Problem problem(MultiViewDataset({w * h}), ConstraintSet{}, Hyperparameters{2});
    Factorization f{w, {h}};
    EXPECT_LT(grad_W(problem, f).norm(), 1e-13);
    EXPECT_LT(grad_H(problem, f, 0).norm(), 1e-13);
}

TEST(Gradient, WithinTermHandExample)
{
    Hyperparameters p;
    p.lambda1 = 1.5;
    ConstraintSet cs;
    cs.within = {{Matrix::Identity(2, 2)}};
    Problem problem(MultiViewDataset({Matrix::Zero(1, 2)}), cs, p);
    Factorization f{Matrix::Zero(1, 1), {Matrix::Ones(1, 2)}};
    const Matrix g = grad_H(problem, f, 0);
    EXPECT_DOUBLE_EQ(g(0, 0), -2.0 * 1.5);
    EXPECT_DOUBLE_EQ(g(0, 1), -2.0 * 1.5);
}

TEST(Gradient, MatchesFiniteDifferences)
{
    std::mt19937_64 rng(17);
    const std::vector<Hyperparameters> settings = {weights(0, 0, 0, 0), weights(0.5, 0, 0, 0), weights(0, 0.5, 0, 0),
                                                   weights(0, 0, 0.5, 0), weights(0, 0, 0, 0.5),
                                                   weights(0.3, 0.4, 0.1, 0.2)};
    std::uint64_t seed = 100;
    for (const auto& w : settings) {
        auto inst = random_instance(seed++, 6, {4, 5, 3}, 2, w);
        check_fd(inst.problem, inst.factors, [](Factorization& f) -> Matrix& { return f.W; },
                 grad_W(inst.problem, inst.factors), 40, rng);
        for (std::size_t v = 0; v < 3; ++v) {
            check_fd(inst.problem, inst.factors, [v](Factorization& f) -> Matrix& { return f.H[v]; },
                     grad_H(inst.problem, inst.factors, v), 30, rng);
        }
    }
}

TEST(Gradient, StoredPairInEitherOrientation)
{
    std::mt19937_64 rng(4);
    Hyperparameters p;
    p.rank = 2;
    p.lambda2 = 0.8;
    ConstraintSet cs;
    cs.between[{1, 0}] = uniform_matrix(rng, 4, 3);
    Problem problem(MultiViewDataset({uniform_matrix(rng, 5, 3), uniform_matrix(rng, 5, 4)}), cs, p);
    Factorization f{uniform_matrix(rng, 5, 2), {uniform_matrix(rng, 2, 3), uniform_matrix(rng, 2, 4)}};
    for (std::size_t v = 0; v < 2; ++v) {
        check_fd(problem, f, [v](Factorization& g) -> Matrix& { return g.H[v]; }, grad_H(problem, f, v), 8, rng);
    }
}

TEST(ProjectedGradient, InteriorEqualsPlainNorm)
{
    auto inst = random_instance(8, 6, {4, 5, 3}, 2, weights(0.3, 0.4, 0.1, 0.2));
    const auto g = gradients(inst.problem, inst.factors);
    double sq = g.grad_W.squaredNorm();
    for (const auto& h : g.grad_H) {
        sq += h.squaredNorm();
    }
    EXPECT_NEAR(projected_gradient_norm(inst.problem, inst.factors), std::sqrt(sq), 1e-12);
}

TEST(ProjectedGradient, BoundEntryWithPositiveGradientIsDropped)
{
    Hyperparameters p;
    p.rank = 2;
    Problem problem(MultiViewDataset({Matrix::Zero(1, 1)}), ConstraintSet{}, p);
    Factorization f{Matrix(1, 2), {Matrix::Ones(2, 1)}};
    f.W << 0.0, 1.0;
    // grad_W = [2, 2] with W_00 at the bound; grad_H = [0, 2].
    EXPECT_DOUBLE_EQ(projected_gradient_norm(problem, f), std::sqrt(8.0));
}

TEST(Lipschitz, HandExamples)
{
    Hyperparameters p;
    p.rank = 2;
    Problem two(MultiViewDataset({Matrix::Ones(2, 2)}), ConstraintSet{}, p);
    Factorization f{Matrix::Identity(2, 2), {Matrix::Identity(2, 2)}};
    EXPECT_NEAR(lipschitz_W(two, f), 2.0, 1e-9);
    f.H[0] << 2, 0, 0, 1;
    EXPECT_NEAR(lipschitz_W(two, f), 8.0, 1e-9);

    p.gamma1 = 5.0;
    Problem g1(MultiViewDataset({Matrix::Ones(2, 2)}), ConstraintSet{}, p);
    f.H[0].setZero();
    EXPECT_NEAR(lipschitz_W(g1, f), 10.0, 1e-9);

    Hyperparameters q;
    q.rank = 1;
    Problem one(MultiViewDataset({Matrix::Ones(1, 1)}), ConstraintSet{}, q);
    EXPECT_NEAR(lipschitz_H(one, Factorization{Matrix::Ones(1, 1), {Matrix::Ones(1, 1)}}, 0), 2.0, 1e-9);

    q.rank = 2;
    q.gamma2 = 1.0;
    Problem sparse(MultiViewDataset({Matrix::Ones(2, 2)}), ConstraintSet{}, q);
    EXPECT_NEAR(lipschitz_H(sparse, Factorization{Matrix::Identity(2, 2), {Matrix::Ones(2, 2)}}, 0), 6.0, 1e-7);

    Hyperparameters l;
    l.rank = 1;
    l.lambda1 = 1.0;
    ConstraintSet cs;
    cs.within = {{Matrix::Identity(3, 3)}};
    Problem within(MultiViewDataset({Matrix::Ones(1, 3)}), cs, l);
    EXPECT_NEAR(lipschitz_H(within, Factorization{Matrix::Zero(1, 1), {Matrix::Ones(1, 3)}}, 0), 2.0, 1e-9);
}

TEST(Lipschitz, BoundsGradientDifferences)
{
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        auto inst = random_instance(500 + trial, 5, {4, 3, 6}, 3, weights(0.4, 0.3, 0.2, 0.5));
        const Problem& problem = inst.problem;
        Factorization a = inst.factors;
        Factorization b = inst.factors;
        b.W = uniform_matrix(rng, 5, 3, 0.0, 2.0);
        const double lw = lipschitz_W(problem, a);
        EXPECT_LE((grad_W(problem, a) - grad_W(problem, b)).norm(), lw * (a.W - b.W).norm() * (1 + 1e-9));

        const std::size_t v = trial % 3;
        Factorization c = inst.factors;
        c.H[v] = uniform_matrix(rng, 3, problem.cols(v), 0.0, 2.0);
        const double lh = lipschitz_H(problem, a, v);
        EXPECT_LE((grad_H(problem, a, v) - grad_H(problem, c, v)).norm(),
                  lh * (a.H[v] - c.H[v]).norm() * (1 + 1e-9));
    }
}

TEST(Hessian, HandExamples)
{
    Problem scalar(MultiViewDataset({Matrix::Ones(1, 1)}), ConstraintSet{}, Hyperparameters{});
    Factorization f{Matrix::Ones(1, 1), {Matrix::Ones(1, 1)}};
    EXPECT_EQ(hessian_quadratic_form_W(scalar, f, Matrix::Zero(1, 1)), 0.0);
    EXPECT_EQ(hessian_quadratic_form_W(scalar, f, Matrix::Ones(1, 1)), 2.0);

    Hyperparameters p;
    p.rank = 2;
    Problem two(MultiViewDataset({Matrix::Ones(2, 2)}), ConstraintSet{}, p);
    Factorization g{Matrix::Identity(2, 2), {Matrix::Ones(2, 2)}};
    EXPECT_EQ(hessian_quadratic_form_H(two, g, 0, Matrix::Zero(2, 2)), 0.0);
    EXPECT_EQ(hessian_quadratic_form_H(two, g, 0, Matrix::Identity(2, 2)), 4.0);
    EXPECT_THROW(hessian_quadratic_form_H(two, g, 0, Matrix::Identity(3, 3)), InvalidArgument);
}

TEST(Hessian, MatchesDenseKroneckerOracle)
{
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const Index m = 2 + trial % 3;
        const Index r = 1 + trial % 4;
        auto inst = random_instance(900 + trial, m, {3, 4, 2}, r, weights(0.6, 0.2, 0.3, 0.7));
        const Problem& problem = inst.problem;
        const Factorization& f = inst.factors;
        const double tau = 0.01 * trial;

        const Matrix qw = dense_hessian_W(problem, f, tau);
        const Matrix dw = uniform_matrix(rng, m, r, -1.0, 1.0);
        const double ew = vec(dw).dot(qw * vec(dw));
        EXPECT_NEAR(hessian_quadratic_form_W(problem, f, dw, tau), ew, 1e-10 * std::max(1.0, std::abs(ew)));

        for (std::size_t v = 0; v < 3; ++v) {
            const Index n = problem.cols(v);
            const Matrix qh = dense_hessian_H(problem, f, v, tau);
            const Matrix dh = uniform_matrix(rng, r, n, -1.0, 1.0);
            const double eh = vec(dh).dot(qh * vec(dh));
            EXPECT_NEAR(hessian_quadratic_form_H(problem, f, v, dh, tau), eh, 1e-10 * std::max(1.0, std::abs(eh)));
        }
    }
}

TEST(Hessian, WFormPositiveWithRegularization)
{
    std::mt19937_64 rng(3);
    Hyperparameters p;
    p.rank = 3;
    p.gamma1 = 1e-3;
    Problem problem(MultiViewDataset({uniform_matrix(rng, 4, 5)}), ConstraintSet{}, p);
    Factorization f{uniform_matrix(rng, 4, 3), {Matrix::Zero(3, 5)}};
    for (int i = 0; i < 50; ++i) {
        EXPECT_GT(hessian_quadratic_form_W(problem, f, uniform_matrix(rng, 4, 3, -1.0, 1.0)), 0.0);
    }
}
