#pragma once

// Independent oracles shared by the test suites. Nothing here calls into the
// code under test beyond constructing inputs and running backward().

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "abl/geometry.hpp"
#include "abl/tensor.hpp"

namespace abl::oracle {

using Fn = std::function<ad::Tensor(const ad::Tensor&)>;

inline std::vector<double> backward_grad(const Fn& f, const ad::Tensor& at) {
    ad::Graph g;
    const auto x = g.variable(at);
    const auto y = f(x);
    if (!y.tracked()) return std::vector<double>(at.size(), 0.0);
    g.backward(y);
    return g.gradient(x);
}

inline std::vector<double> central_diff(const Fn& f, const ad::Tensor& at, double h = 1e-5) {
    std::vector<double> x = at.values(), out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f(ad::Tensor(at.shape(), x)).item();
        x[i] = keep - h;
        const double down = f(ad::Tensor(at.shape(), x)).item();
        x[i] = keep;
        out[i] = (up - down) / (2 * h);
    }
    return out;
}

/// Worst element-wise relative error, counting elements whose absolute
/// error is within `abs_tol` as exact.
inline double worst_rel_err(const std::vector<double>& a, const std::vector<double>& b, double abs_tol = 1e-8) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double err = std::abs(a[i] - b[i]);
        if (err <= abs_tol) continue;
        worst = std::max(worst, err / std::max(std::abs(a[i]), std::abs(b[i])));
    }
    return worst;
}

inline double fd_rel_err(const Fn& f, const ad::Tensor& at) {
    return worst_rel_err(backward_grad(f, at), central_diff(f, at));
}

inline ad::Tensor uniform_tensor(ad::Shape shape, std::uint64_t seed, double lo = -2.0, double hi = 2.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(ad::element_count(shape));
    for (auto& x : v) x = u(rng);
    return ad::Tensor(std::move(shape), std::move(v));
}

/// Scalar sum of a ⊙ w with fixed random weights, so every output element
/// contributes a distinct gradient.
inline ad::Tensor weighted_sum(const ad::Tensor& a, std::uint64_t seed) {
    return ad::sum(ad::mul(a, uniform_tensor(a.shape(), seed, 0.5, 1.5)));
}

inline geometry::LabelMap random_labels(std::size_t h, std::size_t w, int classes, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> u(0, classes - 1);
    geometry::LabelMap m(h, w);
    for (auto& v : m.labels.data()) v = u(rng);
    return m;
}

inline geometry::BoundaryMap random_mask(std::size_t h, std::size_t w, double density, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution on(density);
    geometry::BoundaryMap m(h, w);
    for (auto& v : m.mask.data()) v = on(rng) ? 1 : 0;
    return m;
}

/// Nearest-set-pixel squared distance by exhaustive scan.
inline std::vector<std::int64_t> brute_sq_dist(const geometry::BoundaryMap& m) {
    const auto H = m.height(), W = m.width();
    std::vector<std::int64_t> out(H * W, std::numeric_limits<std::int64_t>::max());
    for (std::size_t r = 0; r < H; ++r)
        for (std::size_t c = 0; c < W; ++c)
            for (std::size_t rr = 0; rr < H; ++rr)
                for (std::size_t cc = 0; cc < W; ++cc) {
                    if (!m(rr, cc)) continue;
                    const auto dr = static_cast<std::int64_t>(r) - static_cast<std::int64_t>(rr);
                    const auto dc = static_cast<std::int64_t>(c) - static_cast<std::int64_t>(cc);
                    out[r * W + c] = std::min(out[r * W + c], dr * dr + dc * dc);
                }
    return out;
}

/// Class-c boundary of a label map: a pixel of class c whose right or lower
/// neighbour is a different non-ignore label, or a pixel of another
/// non-ignore class whose right or lower neighbour has class c.
inline std::vector<std::uint8_t> brute_class_boundary(const geometry::LabelMap& m, std::int32_t c) {
    const auto H = m.height(), W = m.width();
    std::vector<std::uint8_t> out(H * W, 0);
    const auto ind = [&](std::size_t r, std::size_t cc) -> int {
        if (m.ignored(r, cc)) return -1;
        return m(r, cc) == c ? 1 : 0;
    };
    for (std::size_t r = 0; r < H; ++r)
        for (std::size_t cc = 0; cc < W; ++cc) {
            const int a = ind(r, cc);
            if (a < 0) continue;
            bool edge = false;
            if (r + 1 < H && ind(r + 1, cc) >= 0 && ind(r + 1, cc) != a) edge = true;
            if (cc + 1 < W && ind(r, cc + 1) >= 0 && ind(r, cc + 1) != a) edge = true;
            out[r * W + cc] = edge;
        }
    return out;
}

/// Boundary F-score by exhaustive Chebyshev proximity search.
inline double brute_fscore(const geometry::LabelMap& pred, const geometry::LabelMap& gt, std::int32_t c, int d) {
    const auto H = gt.height(), W = gt.width();
    // Pred pixels at gt-ignore positions are treated as ignore as well.
    geometry::LabelMap p = pred;
    for (std::size_t r = 0; r < H; ++r)
        for (std::size_t cc = 0; cc < W; ++cc)
            if (gt.ignored(r, cc)) p(r, cc) = p.ignore;
    const auto bp = brute_class_boundary(p, c), bg = brute_class_boundary(gt, c);
    const auto near = [&](const std::vector<std::uint8_t>& from, std::size_t r, std::size_t cc) {
        for (std::size_t rr = 0; rr < H; ++rr)
            for (std::size_t k = 0; k < W; ++k)
                if (from[rr * W + k] && std::abs(static_cast<long>(rr) - static_cast<long>(r)) <= d &&
                    std::abs(static_cast<long>(k) - static_cast<long>(cc)) <= d)
                    return true;
        return false;
    };
    std::size_t np = 0, ng = 0, tp_p = 0, tp_g = 0;
    for (std::size_t r = 0; r < H; ++r)
        for (std::size_t cc = 0; cc < W; ++cc) {
            if (bp[r * W + cc]) {
                ++np;
                tp_p += near(bg, r, cc);
            }
            if (bg[r * W + cc]) {
                ++ng;
                tp_g += near(bp, r, cc);
            }
        }
    if (ng == 0) return std::numeric_limits<double>::quiet_NaN();
    if (np == 0) return 0.0;
    const double P = static_cast<double>(tp_p) / np, R = static_cast<double>(tp_g) / ng;
    return P + R == 0.0 ? 0.0 : 2 * P * R / (P + R);
}

}  // namespace abl::oracle
