#pragma once

// Boundary extraction, exact Euclidean distance transform and direction
// targets. Everything here works on plain forward values; nothing is recorded
// on an autodiff graph.

#include <cstdint>
#include <vector>

#include "abl/grid.hpp"
#include "abl/pixel.hpp"
#include "abl/tensor.hpp"

namespace abl::geometry {

inline constexpr std::int32_t kDefaultIgnore = 255;

struct LabelMap {
    Grid<std::int32_t> labels;
    std::int32_t ignore = kDefaultIgnore;

    LabelMap() = default;
    LabelMap(std::size_t height, std::size_t width, std::int32_t fill = 0, std::int32_t ignore_value = kDefaultIgnore)
        : labels(height, width, fill), ignore(ignore_value) {}
    LabelMap(Grid<std::int32_t> grid, std::int32_t ignore_value = kDefaultIgnore)
        : labels(std::move(grid)), ignore(ignore_value) {}

    std::size_t height() const { return labels.height(); }
    std::size_t width() const { return labels.width(); }
    std::int32_t operator()(std::size_t r, std::size_t c) const { return labels(r, c); }
    std::int32_t& operator()(std::size_t r, std::size_t c) { return labels(r, c); }
    bool ignored(std::size_t r, std::size_t c) const { return labels(r, c) == ignore; }

    /// Throws unless every non-ignore label lies in [0, classes).
    void validate(std::size_t classes) const;
    /// Number of distinct non-ignore labels.
    std::size_t distinct_classes() const;
};

struct BoundaryMap {
    Grid<std::uint8_t> mask;

    BoundaryMap() = default;
    BoundaryMap(std::size_t height, std::size_t width) : mask(height, width, 0) {}
    explicit BoundaryMap(Grid<std::uint8_t> m) : mask(std::move(m)) {}

    std::size_t height() const { return mask.height(); }
    std::size_t width() const { return mask.width(); }
    bool operator()(std::size_t r, std::size_t c) const { return mask(r, c) != 0; }
    bool operator[](Pixel p) const { return mask[p] != 0; }
    void set(std::size_t r, std::size_t c, bool on = true) { mask(r, c) = on ? 1 : 0; }
    std::size_t popcount() const;
    std::vector<Pixel> pixels() const;

    friend bool operator==(const BoundaryMap&, const BoundaryMap&) = default;
};

/// Squared Euclidean distance (pixel units) to the nearest boundary pixel.
struct DistanceMap {
    Grid<std::int64_t> sq_dist;

    std::size_t height() const { return sq_dist.height(); }
    std::size_t width() const { return sq_dist.width(); }
    double dist(std::size_t r, std::size_t c) const;
    double dist(Pixel p) const;
};

/// Chosen direction for one pixel of the dilated predicted boundary.
struct DirectionEntry {
    Pixel pixel;
    int direction = 0;          // index into kDirections
    std::uint8_t valid = 0;     // bit k set when pixel + kDirections[k] is in bounds
    double distance = 0.0;      // distance of `pixel` itself to the nearest GTB pixel
};

struct DirectionTarget {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<DirectionEntry> entries;  // row-major order of the domain pixels
};

/// KL(P_i || P_{i+offset}) per pixel; operands clamped to [1e-12, 1].
/// Pixels whose neighbour is out of bounds get 0.
Grid<double> pairwise_kl(const ad::Tensor& probs, Offset offset);

/// Per-pixel max of the forward-neighbour KL divergences.
Grid<double> boundary_scores(const ad::Tensor& probs);

/// Threshold selecting at most floor(ratio·N) pixels with score > ε: returns
/// the k-th largest score for k = floor(ratio·N), or the maximum when k = 0.
double adaptive_threshold(const Grid<double>& scores, double ratio = 0.01);

BoundaryMap detect_pdb(const ad::Tensor& probs, double ratio = 0.01);
BoundaryMap detect_gtb(const LabelMap& labels);

/// Exact squared EDT. Throws std::invalid_argument on an empty mask.
DistanceMap edt(const BoundaryMap& boundary);

/// 3×3 dilation, applied `iterations` times, clipped to the image.
BoundaryMap dilate(const BoundaryMap& boundary, int iterations = 1);

/// Argmin-distance direction for every domain pixel not already on a GTB.
/// Ties go to the lowest direction index; out-of-bounds neighbours never win.
DirectionTarget target_directions(const DistanceMap& distances, const BoundaryMap& domain);

/// Mean distance to the nearest GTB pixel over the mask; 0 for an empty mask.
double mean_distance(const DistanceMap& distances, const BoundaryMap& mask);

}  // namespace abl::geometry
