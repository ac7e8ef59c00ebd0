#pragma once

#include "jmf/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace jmf {

enum class SyntheticId { D1, D2, D3, D4 };

inline const char* to_string(SyntheticId id)
{
    switch (id) {
    case SyntheticId::D1: return "D1";
    case SyntheticId::D2: return "D2";
    case SyntheticId::D3: return "D3";
    case SyntheticId::D4: return "D4";
    }
    return "?";
}

inline SyntheticId parse_synthetic_id(const std::string& s)
{
    if (s == "D1" || s == "1") return SyntheticId::D1;
    if (s == "D2" || s == "2") return SyntheticId::D2;
    if (s == "D3" || s == "3") return SyntheticId::D3;
    if (s == "D4" || s == "4") return SyntheticId::D4;
    throw InvalidArgument("unknown synthetic dataset '" + s + "' (expected D1, D2, D3 or D4)");
}

struct SyntheticSpec {
    SyntheticId dataset = SyntheticId::D1;
    /// Data noise level mu; the dataset default when unset.
    std::optional<double> noise;
    std::uint64_t seed = 0;
    /// Block overlap for the W0 blocks and the three H0 blocks. Ignored for
    /// factors drawn as Bernoulli.
    std::optional<Index> coph_W;
    std::array<std::optional<Index>, 3> coph_H;
    double constraint_noise = 0.1;
};

struct GroundTruth {
    SyntheticSpec spec;
    double noise = 0.0;
    Matrix W0;
    std::vector<Matrix> H0;
    std::vector<Matrix> X;
    ConstraintSet constraints;
    /// Bernoulli component vectors that came out all-zero and were redrawn,
    /// and those still all-zero after the retry budget.
    int bernoulli_redraws = 0;
    int bernoulli_left_zero = 0;

    Index rank() const { return W0.cols(); }
    MultiViewDataset dataset() const { return MultiViewDataset(X); }
};

namespace synth {

/// Offset of block j (0-based) of width `width`: j * (width - coph).
inline Index block_offset(Index j, Index width, Index coph)
{
    return j * (width - coph);
}

/// Rows of a rows x r matrix set to 1 in block k for every component k;
/// `skip` lists components left empty.
inline Matrix block_columns(Index rows, Index r, Index width, Index coph, const std::vector<Index>& skip = {})
{
    detail::require(width > coph && coph >= 0, "block width must exceed the overlap");
    Matrix m = Matrix::Zero(rows, r);
    for (Index k = 0; k < r; ++k) {
        if (std::find(skip.begin(), skip.end(), k) != skip.end()) {
            continue;
        }
        const Index start = block_offset(k, width, coph);
        detail::require(start + width <= rows, "block pattern does not fit in " + std::to_string(rows) + " rows");
        m.col(k).segment(start, width).setOnes();
    }
    return m;
}

inline Matrix block_rows(Index r, Index cols, Index width, Index coph, const std::vector<Index>& skip = {})
{
    return block_columns(cols, r, width, coph, skip).transpose();
}

/// splitmix64 mix of a seed and a tag, used to give each generated matrix its
/// own seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag)
{
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Independent stream per (seed, component tag).
inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t tag)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
    return std::mt19937_64(seq);
}

inline Matrix gaussian(std::mt19937_64& rng, Index rows, Index cols)
{
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j) {
        for (Index i = 0; i < rows; ++i) {
            m(i, j) = n(rng);
        }
    }
    return m;
}

struct BernoulliStats {
    int redraws = 0;
    int left_zero = 0;
};

/// Bernoulli(p) matrix whose component vectors (columns when
/// `components_are_columns`, rows otherwise) are redrawn up to 100 times
/// while all-zero.
inline Matrix bernoulli(std::mt19937_64& rng, Index rows, Index cols, double p, bool components_are_columns,
                        BernoulliStats& stats)
{
    std::bernoulli_distribution b(p);
    Matrix m(rows, cols);
    const Index n_comp = components_are_columns ? cols : rows;
    const Index len = components_are_columns ? rows : cols;
    for (Index k = 0; k < n_comp; ++k) {
        for (int attempt = 0;; ++attempt) {
            bool any = false;
            for (Index i = 0; i < len; ++i) {
                const double v = b(rng) ? 1.0 : 0.0;
                any = any || v > 0.0;
                (components_are_columns ? m(i, k) : m(k, i)) = v;
            }
            if (any) {
                break;
            }
            if (attempt == 100) {
                ++stats.left_zero;
                break;
            }
            ++stats.redraws;
        }
    }
    return m;
}

} // namespace synth

/// Theta = clamp((A + A^T)/2, 0) with A = sum_k Theta^k + noise_scale E, where
/// Theta^k[s,t] = 1 when columns s and t both belong to component k, so
/// sum_k Theta^k = H0^T H0 for binary H0.
inline Matrix build_within(const Matrix& h0, double noise_scale, std::uint64_t seed)
{
    Matrix a = h0.transpose() * h0;
    if (noise_scale != 0.0) {
        auto rng = synth::stream(seed, 0x7468657461ULL);
        a += noise_scale * synth::gaussian(rng, a.rows(), a.cols());
    }
    Matrix theta = 0.5 * (a + a.transpose());
    return theta.cwiseMax(0.0);
}

/// R_IJ = clamp(H0_I^T H0_J + noise_scale E, 0): co-membership counts between
/// features of two views, plus noise.
inline Matrix build_between(const Matrix& h0_i, const Matrix& h0_j, double noise_scale, std::uint64_t seed)
{
    detail::require(h0_i.rows() == h0_j.rows(), "between constraint needs equal ranks, got " +
                                                    std::to_string(h0_i.rows()) + " and " +
                                                    std::to_string(h0_j.rows()));
    Matrix r = h0_i.transpose() * h0_j;
    if (noise_scale != 0.0) {
        auto rng = synth::stream(seed, 0x72656c6174ULL);
        r += noise_scale * synth::gaussian(rng, r.rows(), r.cols());
    }
    return r.cwiseMax(0.0);
}

inline double default_noise(SyntheticId id)
{
    return id == SyntheticId::D4 ? 3.0 : 2.0;
}

inline GroundTruth generate(const SyntheticSpec& spec)
{
    GroundTruth gt;
    gt.spec = spec;
    gt.noise = spec.noise.value_or(default_noise(spec.dataset));
    detail::require(std::isfinite(gt.noise) && gt.noise >= 0.0, "noise level must be >= 0");
    detail::require(spec.constraint_noise >= 0.0, "constraint noise must be >= 0");

    auto coph_h = [&](std::size_t i, Index def) { return spec.coph_H[i].value_or(def); };
    synth::BernoulliStats stats;
    auto factor_rng = synth::stream(spec.seed, 1);

    switch (spec.dataset) {
    case SyntheticId::D1:
        gt.W0 = synth::block_columns(45, 4, 10, spec.coph_W.value_or(0));
        gt.H0 = {synth::block_rows(4, 130, 30, coph_h(0, 0)), synth::block_rows(4, 170, 40, coph_h(1, 0), {3}),
                 synth::block_rows(4, 215, 50, coph_h(2, 0), {2})};
        break;
    case SyntheticId::D2:
        gt.W0 = synth::bernoulli(factor_rng, 1000, 10, 0.1, true, stats);
        gt.H0 = {synth::block_rows(10, 200, 20, coph_h(0, 0)), synth::block_rows(10, 300, 30, coph_h(1, 5)),
                 synth::block_rows(10, 500, 50, coph_h(2, 10))};
        break;
    case SyntheticId::D3:
        gt.W0 = synth::block_columns(2000, 20, 100, spec.coph_W.value_or(15));
        for (Index n : {200, 150, 300}) {
            gt.H0.push_back(synth::bernoulli(factor_rng, 20, n, 1.0 / 20.0, false, stats));
        }
        break;
    case SyntheticId::D4:
        gt.W0 = synth::block_columns(500, 5, 100, spec.coph_W.value_or(0));
        gt.H0 = {synth::block_rows(5, 1200, 240, coph_h(0, 0)), synth::block_rows(5, 1300, 260, coph_h(1, 0)),
                 synth::block_rows(5, 2000, 400, coph_h(2, 0))};
        break;
    }
    gt.bernoulli_redraws = stats.redraws;
    gt.bernoulli_left_zero = stats.left_zero;

    const std::size_t n_views = gt.H0.size();
    for (std::size_t i = 0; i < n_views; ++i) {
        Matrix x = gt.W0 * gt.H0[i];
        if (gt.noise != 0.0) {
            auto rng = synth::stream(spec.seed, 100 + i);
            x += gt.noise * synth::gaussian(rng, x.rows(), x.cols());
        }
        gt.X.push_back(x.cwiseMax(0.0));
    }

    gt.constraints.within.resize(n_views);
    for (std::size_t i = 0; i < n_views; ++i) {
        gt.constraints.within[i].push_back(build_within(gt.H0[i], spec.constraint_noise, synth::derive_seed(spec.seed, 200 + i)));
    }
    for (std::size_t i = 0; i < n_views; ++i) {
        for (std::size_t j = i + 1; j < n_views; ++j) {
            gt.constraints.between[{i, j}] =
                build_between(gt.H0[i], gt.H0[j], spec.constraint_noise, synth::derive_seed(spec.seed, 300 + 10 * i + j));
        }
    }
    return gt;
}

/// Problem over the generated data at the ground-truth rank; constraints are
/// attached only when `with_constraints` is set.
inline Problem make_problem(const GroundTruth& gt, Hyperparameters params, bool with_constraints = true)
{
    params.rank = gt.rank();
    return Problem(gt.dataset(), with_constraints ? gt.constraints : ConstraintSet{}, params);
}

} // namespace jmf
