#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "abl/geometry.hpp"

namespace abl::geometry {

void LabelMap::validate(std::size_t classes) const {
    for (auto v : labels.data()) {
        if (v == ignore) continue;
        if (v < 0 || static_cast<std::size_t>(v) >= classes) {
            throw std::invalid_argument("label " + std::to_string(v) + " outside [0," +
                                        std::to_string(classes) + ")");
        }
    }
}

std::size_t LabelMap::distinct_classes() const {
    std::set<std::int32_t> seen;
    for (auto v : labels.data()) {
        if (v != ignore) seen.insert(v);
    }
    return seen.size();
}

std::size_t BoundaryMap::popcount() const {
    return static_cast<std::size_t>(std::count_if(mask.data().begin(), mask.data().end(),
                                                  [](std::uint8_t v) { return v != 0; }));
}

std::vector<Pixel> BoundaryMap::pixels() const {
    std::vector<Pixel> out;
    for (std::size_t r = 0; r < height(); ++r)
        for (std::size_t c = 0; c < width(); ++c)
            if (mask(r, c)) out.push_back({static_cast<std::ptrdiff_t>(r), static_cast<std::ptrdiff_t>(c)});
    return out;
}

namespace {

struct ProbDims {
    std::size_t C, H, W;
};

ProbDims prob_dims(const ad::Tensor& probs) {
    if (probs.rank() != 3) {
        throw ad::ShapeError("expected a C×H×W probability map, got " + ad::to_string(probs.shape()));
    }
    return {probs.shape()[0], probs.shape()[1], probs.shape()[2]};
}

double clamp_prob(double p) { return std::clamp(p, ad::kLogFloor, 1.0); }

}  // namespace

Grid<double> pairwise_kl(const ad::Tensor& probs, Offset offset) {
    const auto [C, H, W] = prob_dims(probs);
    const auto& v = probs.values();
    Grid<double> out(H, W, 0.0);
    for (std::size_t r = 0; r < H; ++r) {
        for (std::size_t c = 0; c < W; ++c) {
            const Pixel q = Pixel{static_cast<std::ptrdiff_t>(r), static_cast<std::ptrdiff_t>(c)} + offset;
            if (!out.in_bounds(q)) continue;
            const std::size_t i = r * W + c;
            const std::size_t j = static_cast<std::size_t>(q.row) * W + static_cast<std::size_t>(q.col);
            double kl = 0.0;
            for (std::size_t k = 0; k < C; ++k) {
                const double p = v[k * H * W + i];
                kl += p * (std::log(clamp_prob(p)) - std::log(clamp_prob(v[k * H * W + j])));
            }
            out(r, c) = kl;
        }
    }
    return out;
}

Grid<double> boundary_scores(const ad::Tensor& probs) {
    auto down = pairwise_kl(probs, kForwardNeighbours[0]);
    const auto right = pairwise_kl(probs, kForwardNeighbours[1]);
    for (std::size_t i = 0; i < down.size(); ++i) down.data()[i] = std::max(down.data()[i], right.data()[i]);
    return down;
}

double adaptive_threshold(const Grid<double>& scores, double ratio) {
    if (scores.size() == 0) throw std::invalid_argument("adaptive_threshold: empty score map");
    if (!(ratio > 0.0 && ratio <= 1.0)) {
        throw std::invalid_argument("adaptive_threshold: ratio must lie in (0,1]");
    }
    const auto k = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(scores.size())));
    std::vector<double> sorted = scores.data();
    if (k == 0) return *std::max_element(sorted.begin(), sorted.end());
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1), sorted.end(),
                     std::greater<>());
    return sorted[k - 1];
}

BoundaryMap detect_pdb(const ad::Tensor& probs, double ratio) {
    const auto scores = boundary_scores(probs);
    const double eps = adaptive_threshold(scores, ratio);
    BoundaryMap out(scores.height(), scores.width());
    for (std::size_t i = 0; i < scores.size(); ++i) out.mask.data()[i] = scores.data()[i] > eps ? 1 : 0;
    return out;
}

BoundaryMap detect_gtb(const LabelMap& labels) {
    BoundaryMap out(labels.height(), labels.width());
    for (std::size_t r = 0; r < labels.height(); ++r) {
        for (std::size_t c = 0; c < labels.width(); ++c) {
            if (labels.ignored(r, c)) continue;
            for (const auto& o : kForwardNeighbours) {
                const Pixel q = Pixel{static_cast<std::ptrdiff_t>(r), static_cast<std::ptrdiff_t>(c)} + o;
                if (!labels.labels.in_bounds(q)) continue;
                const auto other = labels.labels[q];
                if (other != labels.ignore && other != labels(r, c)) {
                    out.set(r, c);
                    break;
                }
            }
        }
    }
    return out;
}

BoundaryMap dilate(const BoundaryMap& boundary, int iterations) {
    BoundaryMap cur = boundary;
    const auto H = static_cast<std::ptrdiff_t>(boundary.height());
    const auto W = static_cast<std::ptrdiff_t>(boundary.width());
    for (int it = 0; it < iterations; ++it) {
        BoundaryMap next(boundary.height(), boundary.width());
        for (std::ptrdiff_t r = 0; r < H; ++r) {
            for (std::ptrdiff_t c = 0; c < W; ++c) {
                if (!cur.mask(static_cast<std::size_t>(r), static_cast<std::size_t>(c))) continue;
                for (std::ptrdiff_t dr = -1; dr <= 1; ++dr)
                    for (std::ptrdiff_t dc = -1; dc <= 1; ++dc) {
                        const auto rr = r + dr, cc = c + dc;
                        if (rr < 0 || cc < 0 || rr >= H || cc >= W) continue;
                        next.set(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc));
                    }
            }
        }
        cur = std::move(next);
    }
    return cur;
}

}  // namespace abl::geometry
