#include <algorithm>
#include <cmath>

#include "abl/synthlab.hpp"

namespace abl::synth {

using geometry::LabelMap;

void ShapeSpec::validate(std::size_t height, std::size_t width) const {
    if (discs < 0 || rects < 0 || lines < 0) throw std::invalid_argument("shapes: negative shape count");
    if (min_radius < 1 || max_radius < min_radius) throw std::invalid_argument("shapes: bad radius range");
    if (max_line_width < 1 || max_line_width > 3) throw std::invalid_argument("shapes: line width must be 1..3");
    if (line_vertices < 2) throw std::invalid_argument("shapes: a polyline needs at least 2 vertices");
    if (static_cast<std::size_t>(2 * max_radius + 1) > std::min(height, width)) {
        throw std::invalid_argument("shapes: shapes do not fit in " + std::to_string(height) + "x" +
                                    std::to_string(width));
    }
}

ad::Tensor box_blur(const ad::Tensor& image, int radius) {
    if (image.rank() != 3) throw ad::ShapeError("box_blur: expected C×H×W");
    if (radius < 0) throw std::invalid_argument("box_blur: negative radius");
    if (radius == 0) return ad::Tensor(image.shape(), image.values());
    const auto C = image.shape()[0], H = image.shape()[1], W = image.shape()[2];
    const auto h = static_cast<std::ptrdiff_t>(H), w = static_cast<std::ptrdiff_t>(W);
    std::vector<double> out(image.size(), 0.0);
    for (std::size_t ch = 0; ch < C; ++ch)
        for (std::ptrdiff_t r = 0; r < h; ++r)
            for (std::ptrdiff_t c = 0; c < w; ++c) {
                double s = 0.0;
                int n = 0;
                for (std::ptrdiff_t rr = std::max<std::ptrdiff_t>(0, r - radius); rr <= std::min(h - 1, r + radius); ++rr)
                    for (std::ptrdiff_t cc = std::max<std::ptrdiff_t>(0, c - radius); cc <= std::min(w - 1, c + radius); ++cc) {
                        s += image[(ch * H + static_cast<std::size_t>(rr)) * W + static_cast<std::size_t>(cc)];
                        ++n;
                    }
                out[(ch * H + static_cast<std::size_t>(r)) * W + static_cast<std::size_t>(c)] = s / n;
            }
    return ad::Tensor(image.shape(), std::move(out));
}

ad::Tensor features_from_labels(const LabelMap& labels, std::size_t classes, double noise, int blur_radius,
                                std::mt19937_64& rng) {
    if (noise < 0.0) throw std::invalid_argument("features: negative noise level");
    labels.validate(classes);
    const auto H = labels.height(), W = labels.width();
    std::vector<double> onehot(classes * H * W, 0.0);
    for (std::size_t i = 0; i < H * W; ++i) {
        const auto v = labels.labels.data()[i];
        if (v != labels.ignore) onehot[static_cast<std::size_t>(v) * H * W + i] = 1.0;
    }
    auto blurred = box_blur(ad::Tensor({classes, H, W}, std::move(onehot)), blur_radius);
    if (noise == 0.0) return blurred;
    std::normal_distribution<double> gauss(0.0, noise);
    std::vector<double> v = blurred.values();
    for (auto& x : v) x += gauss(rng);
    return ad::Tensor(blurred.shape(), std::move(v));
}

namespace {

void paint_disc(LabelMap& gt, double cy, double cx, double radius, std::int32_t cls) {
    for (std::size_t r = 0; r < gt.height(); ++r)
        for (std::size_t c = 0; c < gt.width(); ++c) {
            const double dy = static_cast<double>(r) - cy, dx = static_cast<double>(c) - cx;
            if (dy * dy + dx * dx <= radius * radius) gt(r, c) = cls;
        }
}

void paint_rect(LabelMap& gt, std::ptrdiff_t r0, std::ptrdiff_t c0, std::ptrdiff_t r1, std::ptrdiff_t c1,
                std::int32_t cls) {
    for (auto r = r0; r <= r1; ++r)
        for (auto c = c0; c <= c1; ++c) gt.labels[{r, c}] = cls;
}

// Width-w stamp dragged along the segment in quarter-pixel steps.
void paint_segment(LabelMap& gt, double y0, double x0, double y1, double x1, int width, std::int32_t cls) {
    const double len = std::hypot(y1 - y0, x1 - x0);
    const int steps = std::max(1, static_cast<int>(std::ceil(len * 4.0)));
    for (int s = 0; s <= steps; ++s) {
        const double t = static_cast<double>(s) / steps;
        const auto r = static_cast<std::ptrdiff_t>(std::lround(y0 + t * (y1 - y0)));
        const auto c = static_cast<std::ptrdiff_t>(std::lround(x0 + t * (x1 - x0)));
        for (int a = 0; a < width; ++a)
            for (int b = 0; b < width; ++b) {
                const Pixel p{r + a, c + b};
                if (gt.labels.in_bounds(p)) gt.labels[p] = cls;
            }
    }
}

}  // namespace

Scene generate_scene(std::size_t classes, std::size_t height, std::size_t width, const ShapeSpec& shapes,
                     double noise, int blur_radius, std::uint64_t seed) {
    if (classes < 2) throw std::invalid_argument("generate_scene: need at least 2 classes");
    if (classes > 255) throw std::invalid_argument("generate_scene: at most 255 classes");
    shapes.validate(height, width);
    if (blur_radius < 0) throw std::invalid_argument("generate_scene: negative blur radius");

    std::mt19937_64 rng(seed);
    const auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    const auto uniform_int = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    const auto pick_class = [&] { return static_cast<std::int32_t>(uniform_int(1, static_cast<int>(classes) - 1)); };
    const double H = static_cast<double>(height), W = static_cast<double>(width);

    LabelMap gt(height, width, 0);
    for (int i = 0; i < shapes.discs; ++i) {
        const double radius = uniform(shapes.min_radius, shapes.max_radius);
        paint_disc(gt, uniform(radius, H - 1 - radius), uniform(radius, W - 1 - radius), radius, pick_class());
    }
    for (int i = 0; i < shapes.rects; ++i) {
        const int h = uniform_int(shapes.min_radius, 2 * shapes.max_radius);
        const int w = uniform_int(shapes.min_radius, 2 * shapes.max_radius);
        const int r0 = uniform_int(0, static_cast<int>(height) - h);
        const int c0 = uniform_int(0, static_cast<int>(width) - w);
        paint_rect(gt, r0, c0, r0 + h - 1, c0 + w - 1, pick_class());
    }
    for (int i = 0; i < shapes.lines; ++i) {
        const int lw = uniform_int(1, shapes.max_line_width);
        const auto cls = pick_class();
        double y = uniform(2, H - 3), x = uniform(2, W - 3);
        for (int v = 1; v < shapes.line_vertices; ++v) {
            const double ny = uniform(2, H - 3), nx = uniform(2, W - 3);
            paint_segment(gt, y, x, ny, nx, lw, cls);
            y = ny;
            x = nx;
        }
    }

    Scene scene{gt, ad::Tensor(), classes, seed};
    scene.features = features_from_labels(gt, classes, noise, blur_radius, rng);
    return scene;
}

double poly_lr(double lr0, int t, int max_iter, double power) {
    if (max_iter <= 0) throw std::invalid_argument("poly_lr: max_iter must be positive");
    if (t < 0 || t > max_iter) {
        throw std::out_of_range("poly_lr: iteration " + std::to_string(t) + " outside [0," +
                                std::to_string(max_iter) + "]");
    }
    return lr0 * std::pow(1.0 - static_cast<double>(t) / static_cast<double>(max_iter), power);
}

ad::Tensor logits_from_features(const ad::Tensor& features, double temperature, double floor) {
    std::vector<double> v(features.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = temperature * std::log(std::max(features[i], floor));
    return ad::Tensor(features.shape(), std::move(v));
}

}  // namespace abl::synth
