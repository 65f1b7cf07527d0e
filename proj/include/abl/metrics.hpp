#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "abl/geometry.hpp"

namespace abl::metrics {

/// counts[gt][pred] over non-ignore ground-truth pixels.
struct Confusion {
    std::size_t classes = 0;
    std::vector<std::uint64_t> counts;

    std::uint64_t operator()(std::size_t gt, std::size_t pred) const { return counts[gt * classes + pred]; }
    std::uint64_t total() const;
    double pixel_accuracy() const;
    /// NaN for classes absent from both prediction and ground truth.
    std::vector<double> class_iou() const;
};

Confusion confusion(const geometry::LabelMap& pred, const geometry::LabelMap& gt, std::size_t classes);

/// Mean over non-NaN entries; NaN if there are none.
double nan_mean(const std::vector<double>& values);

/// F-score of class `cls` boundaries with Chebyshev tolerance `radius`.
/// NaN when the ground truth has no boundary for that class.
double boundary_fscore(const geometry::LabelMap& pred, const geometry::LabelMap& gt, std::int32_t cls, int radius);

struct BoundaryScore {
    std::vector<double> per_class;
    double mean = 0.0;
};

struct MetricReport {
    double pix_acc = 0.0;
    std::vector<double> class_iou;
    double miou = 0.0;
    std::map<int, BoundaryScore> boundary_f;  // keyed by radius
};

inline const std::vector<int> kDefaultRadii{1, 3, 5};

MetricReport evaluate(const geometry::LabelMap& pred, const geometry::LabelMap& gt, std::size_t classes,
                      const std::vector<int>& radii = kDefaultRadii);

/// CSV rows: image_id, pix_acc, miou, f@r..., then iou_c and f@r_c per class.
void write_csv_header(std::ostream& os, std::size_t classes, const std::vector<int>& radii = kDefaultRadii);
void write_csv_row(std::ostream& os, const std::string& id, const MetricReport& report,
                   const std::vector<int>& radii = kDefaultRadii);
/// Element-wise NaN-aware mean of the reports.
MetricReport average(const std::vector<MetricReport>& reports);

}  // namespace abl::metrics
