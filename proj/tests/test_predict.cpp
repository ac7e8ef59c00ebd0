#include "jmf/predict.hpp"
#include "jmf/synthgen.hpp"

#include "helpers.hpp"

#include <gtest/gtest.h>

using namespace jmf;
using jmf::testing::random_instance;
using jmf::testing::weights;

namespace {

double error_with(const MultiViewDataset& data, const Matrix& w, const std::vector<Matrix>& hs)
{
    double err = 0.0;
    for (std::size_t i = 0; i < data.num_views(); ++i) {
        err += (data.view(i) - w * hs[i]).squaredNorm();
    }
    return err;
}

struct Trained {
    MultiViewDataset data;
    TrainedModel model;
    double error = 0.0;
};

Trained train_small(Hyperparameters params, std::uint64_t seed = 1)
{
    auto inst = random_instance(seed, 12, {9, 7}, 3, params, false);
    SolverConfig cfg;
    cfg.algorithm = Algorithm::PANLS;
    cfg.tolerance = 1e-12;
    cfg.max_outer_iters = 3000;
    cfg.inner_tolerance = 1e-10;
    auto out = solve(inst.problem, cfg);
    Trained t{inst.problem.dataset(), TrainedModel{out.factors, inst.problem.params(), cfg.algorithm, cfg.stop_rule, 0},
              out.report.reconstruction_error};
    return t;
}

PredictConfig tight()
{
    PredictConfig c;
    c.tolerance = 1e-11;
    c.max_iters = 20000;
    return c;
}

TrainedModel truth_model(const GroundTruth& gt)
{
    TrainedModel m;
    m.factors = Factorization{gt.W0, gt.H0};
    m.params.rank = gt.rank();
    return m;
}

} // namespace

TEST(PredictLeft, TrainingDataReproducesError)
{
    const auto t = train_small(weights(0, 0, 0, 0));
    const Matrix w_hat = predict_left(t.model, t.data, tight());
    EXPECT_EQ(w_hat.rows(), t.data.rows());
    EXPECT_GE(w_hat.minCoeff(), 0.0);
    const double err = error_with(t.data, w_hat, t.model.factors.H);
    EXPECT_NEAR(err, t.error, 1e-6 * t.error);
}

TEST(PredictLeft, ScaledRowGivesScaledBasisRow)
{
    auto t = train_small(weights(0, 0, 0, 0), 3);
    t.model.factors.W = predict_left(t.model, t.data, tight());
    const Index row = 4;
    std::vector<Matrix> test;
    for (const auto& x : t.data.views()) {
        test.push_back(2.0 * x.row(row));
    }
    const Matrix w_hat = predict_left(t.model, MultiViewDataset(test), tight());
    ASSERT_EQ(w_hat.rows(), 1);
    EXPECT_LE((w_hat.row(0) - 2.0 * t.model.factors.W.row(row)).norm(), 1e-6 * t.model.factors.W.row(row).norm());
}

TEST(PredictLeft, ZeroRowsGiveZeroBasis)
{
    auto t = train_small(weights(0, 0, 0.5, 0));
    const MultiViewDataset zero({Matrix::Zero(5, 9), Matrix::Zero(5, 7)});
    const Matrix w_hat = predict_left(t.model, zero, tight());
    EXPECT_LE(w_hat.cwiseAbs().maxCoeff(), 1e-10);
}

TEST(PredictLeft, RejectsShapeMismatch)
{
    auto t = train_small(weights(0, 0, 0, 0));
    EXPECT_THROW(predict_left(t.model, MultiViewDataset({Matrix::Ones(3, 9)})), InvalidArgument);
    EXPECT_THROW(predict_left(t.model, MultiViewDataset({Matrix::Ones(3, 9), Matrix::Ones(3, 8)})), InvalidArgument);
    EXPECT_THROW(fit_basis({}, {}, 0.0, Algorithm::PG, {}), InvalidArgument);
}

TEST(PredictLeft, AnyAlgorithmAgrees)
{
    auto t = train_small(weights(0, 0, 0.1, 0));
    PredictConfig c = tight();
    c.algorithm = Algorithm::PANLS;
    const Matrix ref = predict_left(t.model, t.data, c);
    for (auto a : {Algorithm::PG, Algorithm::Ne, Algorithm::MUR}) {
        c.algorithm = a;
        c.max_iters = 50000;
        const Matrix w = predict_left(t.model, t.data, c);
        EXPECT_LE((w - ref).norm(), 1e-4 * ref.norm()) << to_string(a);
    }
}

TEST(PredictClass, Examples)
{
    Matrix w(3, 3);
    w << 0.1, 0.9, 0.3,
         0.5, 0.5, 0.5,
         0.0, 0.2, 0.7;
    EXPECT_EQ(predict_class(w), (std::vector<Index>{1, 0, 2}));
    EXPECT_EQ(predict_class(Matrix::Identity(4, 4)), (std::vector<Index>{0, 1, 2, 3}));
    EXPECT_THROW(predict_class(Matrix()), InvalidArgument);
}

TEST(PredictClass, InvariantUnderPositiveScaling)
{
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix w = jmf::testing::uniform_matrix(rng, 15, 4);
        EXPECT_EQ(predict_class(w), predict_class(7.5 * w));
        EXPECT_EQ(predict_class(w), predict_class(1e-3 * w));
    }
}

TEST(PredictView, ExactModelReconstructsHeldOutView)
{
    SyntheticSpec spec;
    spec.noise = 0.0;
    const auto gt = generate(spec);
    const auto model = truth_model(gt);
    for (std::size_t target = 0; target < 3; ++target) {
        std::vector<Matrix> others;
        for (std::size_t v = 0; v < 3; ++v) {
            if (v != target) {
                others.push_back(gt.X[v]);
            }
        }
        const Matrix x_hat = predict_view(model, target, others, tight());
        EXPECT_LE((x_hat - gt.X[target]).norm(), 1e-8 * gt.X[target].norm()) << "target " << target;
    }
}

TEST(PredictView, FromBasisExamples)
{
    TrainedModel model;
    model.params.rank = 1;
    model.factors.W = Matrix::Ones(1, 1);
    model.factors.H = {Matrix::Ones(1, 2)};
    Matrix w(1, 1);
    w << 3.0;
    Matrix expected(1, 2);
    expected << 3.0, 3.0;
    EXPECT_EQ(predict_view_from_basis(model, 0, w), expected);
    EXPECT_EQ(predict_view_from_basis(model, 0, Matrix::Zero(4, 1)), Matrix::Zero(4, 2));
}

TEST(PredictView, RejectsBadInputs)
{
    SyntheticSpec spec;
    spec.noise = 0.0;
    const auto gt = generate(spec);
    const auto model = truth_model(gt);
    EXPECT_THROW(predict_view(model, 0, {gt.X[0], gt.X[1], gt.X[2]}), InvalidArgument);
    EXPECT_THROW(predict_view(model, 0, {gt.X[2], gt.X[1]}), InvalidArgument);
    EXPECT_THROW(predict_view(model, 5, {gt.X[1], gt.X[2]}), InvalidArgument);
}

TEST(PredictRight, TrainingDataReproducesError)
{
    const auto t = train_small(weights(0, 0, 0, 0), 5);
    const auto hs = predict_right(t.model, t.data, tight());
    ASSERT_EQ(hs.size(), 2u);
    for (const auto& h : hs) {
        EXPECT_GE(h.minCoeff(), 0.0);
    }
    const double err = error_with(t.data, t.model.factors.W, hs);
    EXPECT_NEAR(err, t.error, 1e-6 * t.error);
}

TEST(PredictRight, ZeroDataGivesZeroCoefficients)
{
    const auto t = train_small(weights(0, 0, 0, 0));
    const auto hs = predict_right(t.model, MultiViewDataset({Matrix::Zero(12, 4)}), tight());
    EXPECT_LE(hs[0].cwiseAbs().maxCoeff(), 1e-10);
}

TEST(PredictRight, DuplicatedColumnsGiveIdenticalCoefficients)
{
    const auto t = train_small(weights(0, 0, 0, 0));
    const Vector col = t.data.view(0).col(2);
    Matrix x(col.size(), 5);
    for (Index j = 0; j < 5; ++j) {
        x.col(j) = col;
    }
    const auto hs = predict_right(t.model, MultiViewDataset({x}), tight());
    for (Index j = 1; j < 5; ++j) {
        EXPECT_LE((hs[0].col(j) - hs[0].col(0)).norm(), 1e-6 * std::max(1.0, hs[0].col(0).norm()));
    }
}

TEST(PredictRight, CoupledViewsUseBetweenConstraints)
{
    auto t = train_small(weights(0, 0.1, 0, 0));
    ConstraintSet cs;
    cs.between[{0, 1}] = Matrix::Ones(9, 7);
    const auto hs = predict_right(t.model, t.data, tight(), cs);
    const auto plain = predict_right(t.model, t.data, tight());
    EXPECT_GT((hs[0] - plain[0]).norm(), 1e-6);
    EXPECT_GE(hs[0].minCoeff(), 0.0);
    EXPECT_GE(hs[1].minCoeff(), 0.0);
}

TEST(PredictRight, RejectsRowMismatch)
{
    const auto t = train_small(weights(0, 0, 0, 0));
    EXPECT_THROW(predict_right(t.model, MultiViewDataset({Matrix::Ones(5, 4)})), InvalidArgument);
}

TEST(TrainedModel, Validation)
{
    TrainedModel m;
    m.params.rank = 2;
    m.factors.W = Matrix::Ones(3, 2);
    m.factors.H = {Matrix::Ones(2, 4)};
    EXPECT_NO_THROW(m.validate());
    m.factors.H[0](0, 0) = -1.0;
    EXPECT_THROW(m.validate(), InvalidArgument);
    m.factors.H = {Matrix::Ones(3, 4)};
    EXPECT_THROW(m.validate(), InvalidArgument);
    m.factors.H.clear();
    EXPECT_THROW(m.validate(), InvalidArgument);
}
