#pragma once

// Binary PGM (P5) and PPM (P6) files.
//
// Label maps and masks are 8-bit PGM (mask pixels are written as 255, any
// non-zero value reads back as set). Squared distances are 16-bit big-endian
// PGM, one count per squared pixel unit, saturating at 65535.

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>

#include "abl/geometry.hpp"
#include "abl/grid.hpp"

namespace abl::io {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct GrayImage {
    Grid<std::uint16_t> pixels;
    std::uint16_t maxval = 255;
};

using Rgb = std::array<std::uint8_t, 3>;

void write_pgm(const std::filesystem::path& path, const GrayImage& image);
GrayImage read_pgm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Grid<Rgb>& image);
Grid<Rgb> read_ppm(const std::filesystem::path& path);

void save_labels(const std::filesystem::path& path, const geometry::LabelMap& labels);
geometry::LabelMap load_labels(const std::filesystem::path& path,
                               std::int32_t ignore = geometry::kDefaultIgnore);

void save_mask(const std::filesystem::path& path, const geometry::BoundaryMap& mask);
geometry::BoundaryMap load_mask(const std::filesystem::path& path);

inline constexpr std::int64_t kMaxStoredSqDist = 65535;
void save_sq_dist(const std::filesystem::path& path, const geometry::DistanceMap& distances);

/// Fixed palette; background (class 0) is dark grey, ignore pixels white.
Rgb class_colour(std::int32_t cls, std::int32_t ignore = geometry::kDefaultIgnore);

/// Dimmed class colours of `base` with GTB pixels in blue and PDB pixels in
/// red (magenta where both are set).
Grid<Rgb> boundary_overlay(const geometry::LabelMap& base, const geometry::BoundaryMap& gtb,
                           const geometry::BoundaryMap& pdb);

}  // namespace abl::io
