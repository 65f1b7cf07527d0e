#include <cmath>
#include <limits>
#include <stdexcept>

#include "abl/geometry.hpp"

namespace abl::geometry {
namespace {

constexpr std::int64_t kUnreached = std::numeric_limits<std::int64_t>::max();

// Lower envelope of parabolas y = (x - s)^2 + f(s) over the finite samples of
// f, evaluated at every x. Entries equal to kUnreached are not sites.
void transform_1d(std::vector<std::int64_t>& f) {
    const auto n = static_cast<std::int64_t>(f.size());
    std::vector<std::int64_t> sites;
    std::vector<double> bounds;  // bounds[k] = left edge of the region owned by sites[k]
    sites.reserve(f.size());
    bounds.reserve(f.size() + 1);

    const auto intersect = [&](std::int64_t a, std::int64_t b) {
        // abscissa where the parabolas rooted at a < b meet
        const double num = static_cast<double>((f[b] + b * b) - (f[a] + a * a));
        return num / static_cast<double>(2 * (b - a));
    };

    for (std::int64_t q = 0; q < n; ++q) {
        if (f[q] == kUnreached) continue;
        while (!sites.empty()) {
            const double s = intersect(sites.back(), q);
            if (s <= bounds.back()) {
                sites.pop_back();
                bounds.pop_back();
            } else {
                bounds.push_back(s);
                break;
            }
        }
        if (sites.empty()) bounds.push_back(-std::numeric_limits<double>::infinity());
        sites.push_back(q);
    }
    if (sites.empty()) return;  // whole line unreached

    std::vector<std::int64_t> out(f.size());
    std::size_t k = 0;
    for (std::int64_t x = 0; x < n; ++x) {
        while (k + 1 < sites.size() && bounds[k + 1] < static_cast<double>(x)) ++k;
        const auto d = x - sites[k];
        out[static_cast<std::size_t>(x)] = d * d + f[sites[k]];
    }
    f = std::move(out);
}

}  // namespace

double DistanceMap::dist(std::size_t r, std::size_t c) const {
    return std::sqrt(static_cast<double>(sq_dist(r, c)));
}

double DistanceMap::dist(Pixel p) const { return std::sqrt(static_cast<double>(sq_dist[p])); }

DistanceMap edt(const BoundaryMap& boundary) {
    const std::size_t H = boundary.height(), W = boundary.width();
    if (boundary.popcount() == 0) {
        throw std::invalid_argument("edt: boundary mask is empty, distance undefined");
    }
    Grid<std::int64_t> g(H, W, kUnreached);
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (boundary.mask.data()[i]) g.data()[i] = 0;
    }

    std::vector<std::int64_t> line(H);
    for (std::size_t c = 0; c < W; ++c) {
        for (std::size_t r = 0; r < H; ++r) line[r] = g(r, c);
        transform_1d(line);
        for (std::size_t r = 0; r < H; ++r) g(r, c) = line[r];
    }
    line.resize(W);
    for (std::size_t r = 0; r < H; ++r) {
        for (std::size_t c = 0; c < W; ++c) line[c] = g(r, c);
        transform_1d(line);
        for (std::size_t c = 0; c < W; ++c) g(r, c) = line[c];
    }
    return DistanceMap{std::move(g)};
}

DirectionTarget target_directions(const DistanceMap& distances, const BoundaryMap& domain) {
    if (domain.height() != distances.height() || domain.width() != distances.width()) {
        throw std::invalid_argument("target_directions: domain and distance map sizes differ");
    }
    DirectionTarget out{domain.height(), domain.width(), {}};
    for (const Pixel p : domain.pixels()) {
        const auto here = distances.sq_dist[p];
        if (here == 0) continue;  // already on a GTB, discarded
        DirectionEntry e;
        e.pixel = p;
        e.distance = std::sqrt(static_cast<double>(here));
        std::int64_t best = kUnreached;
        int best_k = -1;
        for (int k = 0; k < static_cast<int>(kDirections.size()); ++k) {
            const Pixel q = p + kDirections[static_cast<std::size_t>(k)];
            if (!distances.sq_dist.in_bounds(q)) continue;
            e.valid |= static_cast<std::uint8_t>(1u << k);
            if (distances.sq_dist[q] < best) {
                best = distances.sq_dist[q];
                best_k = k;
            }
        }
        if (best_k < 0) {
            throw std::invalid_argument("target_directions: pixel has no in-bounds neighbour");
        }
        e.direction = best_k;
        out.entries.push_back(e);
    }
    return out;
}

double mean_distance(const DistanceMap& distances, const BoundaryMap& mask) {
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t r = 0; r < mask.height(); ++r)
        for (std::size_t c = 0; c < mask.width(); ++c)
            if (mask(r, c)) {
                total += distances.dist(r, c);
                ++n;
            }
    return n ? total / static_cast<double>(n) : 0.0;
}

}  // namespace abl::geometry
