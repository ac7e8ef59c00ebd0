#pragma once

#include "jmf/model.hpp"

#include <random>
#include <vector>

namespace jmf::testing {

inline Matrix uniform_matrix(std::mt19937_64& rng, Index rows, Index cols, double lo = 0.0, double hi = 1.0)
{
    std::uniform_real_distribution<double> d(lo, hi);
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) {
        m.data()[i] = d(rng);
    }
    return m;
}

struct RandomInstance {
    Problem problem;
    Factorization factors;
};

/// Random nonnegative data, one within-constraint per view (two on view 0),
/// between-constraints on (0,1) and (2,0) when there are enough views.
inline RandomInstance random_instance(std::uint64_t seed, Index m, const std::vector<Index>& ns, Index r,
                                      Hyperparameters params, bool with_constraints = true)
{
    std::mt19937_64 rng(seed);
    std::vector<Matrix> views;
    for (Index n : ns) {
        views.push_back(uniform_matrix(rng, m, n, 0.0, 3.0));
    }
    ConstraintSet cs;
    if (with_constraints) {
        cs.within.resize(ns.size());
        for (std::size_t i = 0; i < ns.size(); ++i) {
            cs.within[i].push_back(uniform_matrix(rng, ns[i], ns[i]));
        }
        cs.within[0].push_back(uniform_matrix(rng, ns[0], ns[0]));
        if (ns.size() >= 2) {
            cs.between[{0, 1}] = uniform_matrix(rng, ns[0], ns[1]);
        }
        if (ns.size() >= 3) {
            cs.between[{2, 0}] = uniform_matrix(rng, ns[2], ns[0]);
        }
    }
    params.rank = r;
    Problem problem(MultiViewDataset(std::move(views)), std::move(cs), params);
    Factorization f;
    f.W = uniform_matrix(rng, m, r, 0.1, 1.0);
    for (Index n : ns) {
        f.H.push_back(uniform_matrix(rng, r, n, 0.1, 1.0));
    }
    return {std::move(problem), std::move(f)};
}

inline Hyperparameters weights(double l1, double l2, double g1, double g2)
{
    Hyperparameters p;
    p.lambda1 = l1;
    p.lambda2 = l2;
    p.gamma1 = g1;
    p.gamma2 = g2;
    return p;
}

} // namespace jmf::testing
