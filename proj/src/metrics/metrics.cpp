#include "abl/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace abl::metrics {

using geometry::BoundaryMap;
using geometry::LabelMap;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_same_size(const LabelMap& a, const LabelMap& b) {
    if (a.height() != b.height() || a.width() != b.width()) {
        throw std::invalid_argument("label maps differ in size: " + std::to_string(a.height()) + "x" +
                                    std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                                    std::to_string(b.width()));
    }
}

// Boundary of the class-`cls` indicator, restricted to non-ignore gt pixels.
BoundaryMap class_boundary(const LabelMap& labels, const LabelMap& gt, std::int32_t cls) {
    LabelMap indicator(labels.height(), labels.width(), 0, 2);
    for (std::size_t r = 0; r < labels.height(); ++r)
        for (std::size_t c = 0; c < labels.width(); ++c)
            indicator(r, c) = gt.ignored(r, c) ? 2 : (labels(r, c) == cls ? 1 : 0);
    return geometry::detect_gtb(indicator);
}

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

}  // namespace

std::uint64_t Confusion::total() const { return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}); }

double Confusion::pixel_accuracy() const {
    const auto n = total();
    if (n == 0) return kNaN;
    std::uint64_t diag = 0;
    for (std::size_t c = 0; c < classes; ++c) diag += (*this)(c, c);
    return static_cast<double>(diag) / static_cast<double>(n);
}

std::vector<double> Confusion::class_iou() const {
    std::vector<double> iou(classes, kNaN);
    for (std::size_t c = 0; c < classes; ++c) {
        std::uint64_t row = 0, col = 0;
        for (std::size_t k = 0; k < classes; ++k) {
            row += (*this)(c, k);
            col += (*this)(k, c);
        }
        const auto denom = row + col - (*this)(c, c);
        if (denom > 0) iou[c] = static_cast<double>((*this)(c, c)) / static_cast<double>(denom);
    }
    return iou;
}

Confusion confusion(const LabelMap& pred, const LabelMap& gt, std::size_t classes) {
    require_same_size(pred, gt);
    Confusion m{classes, std::vector<std::uint64_t>(classes * classes, 0)};
    for (std::size_t r = 0; r < gt.height(); ++r)
        for (std::size_t c = 0; c < gt.width(); ++c) {
            if (gt.ignored(r, c)) continue;
            const auto g = gt(r, c), p = pred(r, c);
            if (g < 0 || p < 0 || static_cast<std::size_t>(g) >= classes || static_cast<std::size_t>(p) >= classes) {
                throw std::invalid_argument("confusion: label outside [0," + std::to_string(classes) + ")");
            }
            ++m.counts[static_cast<std::size_t>(g) * classes + static_cast<std::size_t>(p)];
        }
    return m;
}

double nan_mean(const std::vector<double>& values) {
    double s = 0.0;
    std::size_t n = 0;
    for (double v : values) {
        if (std::isnan(v)) continue;
        s += v;
        ++n;
    }
    return n ? s / static_cast<double>(n) : kNaN;
}

double boundary_fscore(const LabelMap& pred, const LabelMap& gt, std::int32_t cls, int radius) {
    require_same_size(pred, gt);
    if (radius < 1) throw std::invalid_argument("boundary_fscore: radius must be >= 1");
    const auto gt_b = class_boundary(gt, gt, cls);
    const auto gt_count = gt_b.popcount();
    if (gt_count == 0) return kNaN;
    const auto pred_b = class_boundary(pred, gt, cls);
    const auto pred_count = pred_b.popcount();
    if (pred_count == 0) return 0.0;

    const auto gt_zone = geometry::dilate(gt_b, radius);
    const auto pred_zone = geometry::dilate(pred_b, radius);
    std::size_t matched_pred = 0, matched_gt = 0;
    for (std::size_t i = 0; i < gt_b.mask.size(); ++i) {
        if (pred_b.mask.data()[i] && gt_zone.mask.data()[i]) ++matched_pred;
        if (gt_b.mask.data()[i] && pred_zone.mask.data()[i]) ++matched_gt;
    }
    const double precision = static_cast<double>(matched_pred) / static_cast<double>(pred_count);
    const double recall = static_cast<double>(matched_gt) / static_cast<double>(gt_count);
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

MetricReport evaluate(const LabelMap& pred, const LabelMap& gt, std::size_t classes, const std::vector<int>& radii) {
    const auto m = confusion(pred, gt, classes);
    MetricReport r;
    r.pix_acc = m.pixel_accuracy();
    r.class_iou = m.class_iou();
    r.miou = nan_mean(r.class_iou);
    for (int d : radii) {
        BoundaryScore s;
        for (std::size_t c = 0; c < classes; ++c) {
            s.per_class.push_back(boundary_fscore(pred, gt, static_cast<std::int32_t>(c), d));
        }
        s.mean = nan_mean(s.per_class);
        r.boundary_f[d] = std::move(s);
    }
    return r;
}

void write_csv_header(std::ostream& os, std::size_t classes, const std::vector<int>& radii) {
    os << "image_id,pix_acc,miou";
    for (int d : radii) os << ",f" << d;
    for (std::size_t c = 0; c < classes; ++c) os << ",iou_c" << c;
    for (int d : radii)
        for (std::size_t c = 0; c < classes; ++c) os << ",f" << d << "_c" << c;
    os << '\n';
}

void write_csv_row(std::ostream& os, const std::string& id, const MetricReport& report, const std::vector<int>& radii) {
    os << id << ',' << fmt(report.pix_acc) << ',' << fmt(report.miou);
    for (int d : radii) os << ',' << fmt(report.boundary_f.at(d).mean);
    for (double v : report.class_iou) os << ',' << fmt(v);
    for (int d : radii)
        for (double v : report.boundary_f.at(d).per_class) os << ',' << fmt(v);
    os << '\n';
}

MetricReport average(const std::vector<MetricReport>& reports) {
    if (reports.empty()) throw std::invalid_argument("average: no reports");
    const auto column = [&](auto&& pick) {
        std::vector<double> v;
        for (const auto& r : reports) v.push_back(pick(r));
        return nan_mean(v);
    };
    MetricReport out;
    out.pix_acc = column([](const MetricReport& r) { return r.pix_acc; });
    out.miou = column([](const MetricReport& r) { return r.miou; });
    const std::size_t C = reports.front().class_iou.size();
    for (std::size_t c = 0; c < C; ++c) out.class_iou.push_back(column([c](const MetricReport& r) { return r.class_iou[c]; }));
    for (const auto& [d, first] : reports.front().boundary_f) {
        BoundaryScore s;
        s.mean = column([d = d](const MetricReport& r) { return r.boundary_f.at(d).mean; });
        for (std::size_t c = 0; c < first.per_class.size(); ++c) {
            s.per_class.push_back(column([d = d, c](const MetricReport& r) { return r.boundary_f.at(d).per_class[c]; }));
        }
        out.boundary_f[d] = std::move(s);
    }
    return out;
}

}  // namespace abl::metrics
