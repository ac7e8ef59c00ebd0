#pragma once

#include "jmf/model.hpp"
#include "jmf/objective.hpp"
#include "jmf/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace jmf {

/// matching[k] = learned component paired with ground-truth component k.
using Matching = std::vector<Index>;

/// Pearson correlation; 0 when either vector is constant.
inline double pearson(const Vector& a, const Vector& b)
{
    const Vector ca = a.array() - a.mean();
    const Vector cb = b.array() - b.mean();
    const double den = ca.norm() * cb.norm();
    return den > 0.0 ? ca.dot(cb) / den : 0.0;
}

/// Greedy matching of learned W columns to truth columns: repeatedly take the
/// unmatched (truth, learned) pair with the highest Pearson correlation.
/// Ties go to the lowest truth index, then the lowest learned index.
inline Matching match_components(const Matrix& learned_W, const Matrix& truth_W)
{
    detail::require(learned_W.cols() == truth_W.cols(), "rank mismatch: learned " +
                                                            std::to_string(learned_W.cols()) + " vs truth " +
                                                            std::to_string(truth_W.cols()));
    detail::require(learned_W.rows() == truth_W.rows(), "row mismatch between learned and truth W");
    const Index r = truth_W.cols();
    Matrix corr(r, r);
    for (Index t = 0; t < r; ++t) {
        for (Index l = 0; l < r; ++l) {
            corr(t, l) = pearson(truth_W.col(t), learned_W.col(l));
        }
    }
    Matching match(r, -1);
    std::vector<bool> used(r, false);
    for (Index step = 0; step < r; ++step) {
        double best = -std::numeric_limits<double>::infinity();
        Index bt = -1;
        Index bl = -1;
        for (Index t = 0; t < r; ++t) {
            if (match[t] >= 0) {
                continue;
            }
            for (Index l = 0; l < r; ++l) {
                if (!used[l] && corr(t, l) > best) {
                    best = corr(t, l);
                    bt = t;
                    bl = l;
                }
            }
        }
        match[bt] = bl;
        used[bl] = true;
    }
    return match;
}

inline Matching match_components(const Factorization& learned, const GroundTruth& truth)
{
    return match_components(learned.W, truth.W0);
}

/// Rank-based AUC (Mann-Whitney statistic with midranks): the probability
/// that a random positive outscores a random negative, ties counting 1/2.
inline double auc_score(const std::vector<double>& scores, const std::vector<double>& labels)
{
    detail::require(scores.size() == labels.size(), "scores and labels differ in length");
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (double l : labels) {
        detail::require(l == 0.0 || l == 1.0, "labels must be binary");
        n_pos += l == 1.0 ? 1 : 0;
    }
    const std::size_t n_neg = n - n_pos;
    detail::require(n_pos > 0 && n_neg > 0, "AUC is undefined when all labels are equal");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) {
            ++j;
        }
        const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) {
            if (labels[order[k]] == 1.0) {
                pos_rank_sum += midrank;
            }
        }
        i = j + 1;
    }
    const double np = static_cast<double>(n_pos);
    return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

struct EvalResult {
    /// Matched W and every matched H_I pooled, each component scaled to max 1.
    double auc = 0.0;
    double auc_W = 0.0;
    /// All views' H entries pooled.
    double auc_H = 0.0;
    /// NaN for a view whose ground truth has a single label value.
    std::vector<double> per_view_auc;
    double reconstruction_error = 0.0;
    Matching matching;
};

namespace detail {

inline void append(std::vector<double>& out, const Matrix& m)
{
    out.insert(out.end(), m.data(), m.data() + m.size());
}

inline double auc_or_nan(const std::vector<double>& s, const std::vector<double>& l)
{
    const auto pos = std::count(l.begin(), l.end(), 1.0);
    if (pos == 0 || pos == static_cast<std::ptrdiff_t>(l.size())) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    return auc_score(s, l);
}

} // namespace detail

/// Learned factors permuted into ground-truth component order, with every W
/// column and every joint H row (across views) divided by its maximum, so
/// scores from different factors and components share one scale.
inline Factorization aligned_scaled(const Factorization& learned, const Matching& match)
{
    const Index r = learned.W.cols();
    Factorization out;
    out.W.resize(learned.W.rows(), r);
    out.H.resize(learned.H.size());
    for (std::size_t v = 0; v < learned.H.size(); ++v) {
        out.H[v].resize(r, learned.H[v].cols());
    }
    for (Index k = 0; k < r; ++k) {
        const Index l = match.at(k);
        const double wmax = learned.W.col(l).maxCoeff();
        out.W.col(k) = wmax > 0.0 ? Vector(learned.W.col(l) / wmax) : Vector(learned.W.col(l));
        double hmax = 0.0;
        for (const auto& h : learned.H) {
            hmax = std::max(hmax, h.row(l).maxCoeff());
        }
        for (std::size_t v = 0; v < learned.H.size(); ++v) {
            out.H[v].row(k) = hmax > 0.0 ? Matrix(learned.H[v].row(l) / hmax) : Matrix(learned.H[v].row(l));
        }
    }
    return out;
}

inline EvalResult evaluate(const Factorization& learned, const GroundTruth& truth)
{
    detail::require(learned.H.size() == truth.H0.size(), "view count differs from the ground truth");
    EvalResult res;
    res.matching = match_components(learned, truth);
    const Factorization a = aligned_scaled(learned, res.matching);

    std::vector<double> ws;
    std::vector<double> wl;
    detail::append(ws, a.W);
    detail::append(wl, truth.W0);
    res.auc_W = detail::auc_or_nan(ws, wl);

    std::vector<double> hs;
    std::vector<double> hl;
    for (std::size_t v = 0; v < a.H.size(); ++v) {
        std::vector<double> s;
        std::vector<double> l;
        detail::append(s, a.H[v]);
        detail::append(l, truth.H0[v]);
        res.per_view_auc.push_back(detail::auc_or_nan(s, l));
        hs.insert(hs.end(), s.begin(), s.end());
        hl.insert(hl.end(), l.begin(), l.end());
    }
    res.auc_H = detail::auc_or_nan(hs, hl);

    ws.insert(ws.end(), hs.begin(), hs.end());
    wl.insert(wl.end(), hl.begin(), hl.end());
    res.auc = detail::auc_or_nan(ws, wl);

    double err = 0.0;
    for (std::size_t v = 0; v < learned.H.size(); ++v) {
        err += (truth.X[v] - learned.W * learned.H[v]).squaredNorm();
    }
    res.reconstruction_error = err;
    return res;
}

/// modules[v][k] = feature indices j with z-score of H_v[k, j] above the
/// threshold (population standard deviation per row).
struct ModuleAssignment {
    double threshold = 1.5;
    std::vector<std::vector<std::vector<Index>>> modules;
};

inline ModuleAssignment assign_modules(const Factorization& f, double threshold = 1.5)
{
    ModuleAssignment out;
    out.threshold = threshold;
    for (const auto& h : f.H) {
        std::vector<std::vector<Index>> per_view(h.rows());
        for (Index k = 0; k < h.rows(); ++k) {
            const double mean = h.row(k).mean();
            const double sd = std::sqrt((h.row(k).array() - mean).square().mean());
            if (!(sd > 0.0)) {
                continue;
            }
            for (Index j = 0; j < h.cols(); ++j) {
                if ((h(k, j) - mean) / sd > threshold) {
                    per_view[k].push_back(j);
                }
            }
        }
        out.modules.push_back(std::move(per_view));
    }
    return out;
}

} // namespace jmf
