#include "abl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace abl::losses {

using ad::Tensor;
using geometry::LabelMap;

namespace {

void require_logits(const Tensor& logits, const LabelMap& labels) {
    if (logits.rank() != 3 || logits.shape()[1] != labels.height() || logits.shape()[2] != labels.width()) {
        throw ad::ShapeError("logits " + ad::to_string(logits.shape()) + " do not match labels " +
                             std::to_string(labels.height()) + "x" + std::to_string(labels.width()));
    }
    labels.validate(logits.shape()[0]);
}

// KL(a || b) per column of two C×K tensors, returned as K. `log_a` is log(a).
Tensor columnwise_kl(const Tensor& a, const Tensor& log_a, const Tensor& b) {
    return ad::sum_axis(ad::mul(a, ad::sub(log_a, ad::log(b))), 0);
}

}  // namespace

void AblConfig::validate() const {
    if (!(theta > 0.0)) throw std::invalid_argument("abl: theta must be positive");
    if (std::abs(smoothing_peak + 7.0 * smoothing_rest - 1.0) > 1e-12) {
        throw std::invalid_argument("abl: smoothing_peak + 7*smoothing_rest must equal 1");
    }
    if (smoothing_peak < 0.0 || smoothing_rest < 0.0) throw std::invalid_argument("abl: negative smoothing");
    if (!(boundary_ratio > 0.0 && boundary_ratio <= 1.0)) {
        throw std::invalid_argument("abl: boundary_ratio must lie in (0,1]");
    }
}

double distance_weight(double distance, double theta) { return std::min(distance, theta) / theta; }

std::array<double, 8> smoothed_target(int direction, std::uint8_t valid, const AblConfig& cfg) {
    std::array<double, 8> t{};
    double total = 0.0;
    for (int k = 0; k < 8; ++k) {
        if (!(valid & (1u << k))) continue;
        t[static_cast<std::size_t>(k)] = k == direction ? cfg.smoothing_peak : cfg.smoothing_rest;
        total += t[static_cast<std::size_t>(k)];
    }
    if (valid == 0xff) return t;
    for (auto& v : t) v /= total;
    return t;
}

Tensor cross_entropy(const Tensor& logits, const LabelMap& labels) {
    require_logits(logits, labels);
    const std::size_t C = logits.shape()[0], HW = labels.height() * labels.width();
    std::vector<double> onehot(C * HW, 0.0);
    std::size_t n = 0;
    for (std::size_t i = 0; i < HW; ++i) {
        const auto v = labels.labels.data()[i];
        if (v == labels.ignore) continue;
        onehot[static_cast<std::size_t>(v) * HW + i] = 1.0;
        ++n;
    }
    if (n == 0) throw std::invalid_argument("cross_entropy: every pixel is ignored");
    const auto logp = ad::log_softmax_channel(logits);
    return ad::scale(ad::sum(ad::mul(Tensor(logits.shape(), std::move(onehot)), logp)),
                     -1.0 / static_cast<double>(n));
}

DirectionLogits direction_logits(const Tensor& probs, std::span<const Pixel> pixels, bool detach) {
    if (probs.rank() != 3) throw ad::ShapeError("direction_logits: expected C×H×W probabilities");
    const Grid<char> bounds(probs.shape()[1], probs.shape()[2], 0);
    const std::size_t K = pixels.size();

    DirectionLogits out;
    out.valid.assign(8 * K, 0);
    const Tensor center = ad::gather_pixels(probs, pixels);
    const Tensor log_center = ad::log(center);

    std::vector<Tensor> per_direction;
    std::vector<Pixel> neighbours(K);
    for (std::size_t k = 0; k < kDirections.size(); ++k) {
        for (std::size_t i = 0; i < K; ++i) {
            const Pixel q = pixels[i] + kDirections[k];
            const bool inside = bounds.in_bounds(q);
            out.valid[k * K + i] = inside ? 1 : 0;
            neighbours[i] = inside ? q : pixels[i];
        }
        Tensor nb = ad::gather_pixels(probs, neighbours);
        if (detach) nb = ad::stop_gradient(nb);
        per_direction.push_back(columnwise_kl(center, log_center, nb));
    }
    out.logits = ad::reshape(ad::stack(per_direction), {8, K, 1});
    return out;
}

Tensor direction_distribution(const Tensor& probs, std::span<const Pixel> pixels, bool detach) {
    const auto d = direction_logits(probs, pixels, detach);
    return ad::softmax_channel(d.logits, d.valid);
}

AblSelection select_abl_pixels(const Tensor& probs, const LabelMap& labels, const AblConfig& cfg) {
    AblSelection sel;
    sel.targets.height = labels.height();
    sel.targets.width = labels.width();
    const auto gtb = geometry::detect_gtb(labels);
    if (gtb.popcount() == 0) return sel;
    sel.has_gtb = true;
    const auto pdb = geometry::detect_pdb(probs, cfg.boundary_ratio);
    sel.pdb_count = pdb.popcount();
    const auto distances = geometry::edt(gtb);
    sel.mean_pdb_distance = geometry::mean_distance(distances, pdb);
    if (sel.pdb_count == 0) return sel;
    sel.targets = geometry::target_directions(distances, geometry::dilate(pdb));
    return sel;
}

AblResult abl(const Tensor& logits, const LabelMap& labels, const AblConfig& cfg, const AblSelection* frozen) {
    cfg.validate();
    require_logits(logits, labels);
    const Tensor probs = ad::softmax_channel(logits);

    AblResult result{Tensor::scalar(0.0), frozen ? *frozen : select_abl_pixels(probs, labels, cfg)};
    const auto& entries = result.selection.targets.entries;
    if (entries.empty()) return result;

    const std::size_t K = entries.size();
    std::vector<Pixel> pixels(K);
    std::vector<double> weighted_target(8 * K);
    for (std::size_t i = 0; i < K; ++i) {
        const auto& e = entries[i];
        pixels[i] = e.pixel;
        const auto t = smoothed_target(e.direction, e.valid, cfg);
        const double w = distance_weight(e.distance, cfg.theta);
        for (std::size_t k = 0; k < 8; ++k) weighted_target[k * K + i] = w * t[k];
    }

    const auto d = direction_logits(probs, pixels, cfg.detach);
    const Tensor logp = ad::log_softmax_channel(d.logits, d.valid);
    const Tensor ce = ad::sum(ad::mul(Tensor({8, K, 1}, std::move(weighted_target)), logp));
    result.loss = ad::scale(ce, -1.0 / static_cast<double>(K));
    return result;
}

Tensor lovasz_extension(const Tensor& errors, std::span<const std::uint8_t> foreground) {
    if (errors.rank() != 1 || errors.size() != foreground.size()) {
        throw ad::ShapeError("lovasz_extension: errors " + ad::to_string(errors.shape()) + " vs " +
                             std::to_string(foreground.size()) + " labels");
    }
    const std::size_t n = errors.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return errors[a] > errors[b]; });

    // Jaccard-loss increments along the sorted order.
    const double gts = static_cast<double>(std::count(foreground.begin(), foreground.end(), std::uint8_t{1}));
    std::vector<double> grad(n);
    double cum_fg = 0.0, cum_bg = 0.0, prev = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (foreground[order[i]]) {
            cum_fg += 1.0;
        } else {
            cum_bg += 1.0;
        }
        const double unite = gts + cum_bg;
        const double jaccard = unite > 0.0 ? 1.0 - (gts - cum_fg) / unite : 0.0;
        grad[i] = jaccard - prev;
        prev = jaccard;
    }
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) loss += errors[order[i]] * grad[i];

    ad::Graph* g = ad::common_graph({errors});
    if (!g) return Tensor::scalar(loss);
    return g->record({errors}, ad::Shape{}, {loss},
                     [order = std::move(order), grad = std::move(grad)](std::span<const double> up,
                                                                       ad::InputGrads& in) {
                         for (std::size_t i = 0; i < order.size(); ++i) in[0][order[i]] += up[0] * grad[i];
                     });
}

Tensor lovasz_softmax_probs(const Tensor& probs, const LabelMap& labels) {
    require_logits(probs, labels);
    const std::size_t C = probs.shape()[0];
    std::vector<Pixel> valid;
    std::vector<std::int32_t> gt;
    for (std::size_t r = 0; r < labels.height(); ++r)
        for (std::size_t c = 0; c < labels.width(); ++c) {
            if (labels.ignored(r, c)) continue;
            valid.push_back({static_cast<std::ptrdiff_t>(r), static_cast<std::ptrdiff_t>(c)});
            gt.push_back(labels(r, c));
        }
    if (valid.empty()) throw std::invalid_argument("lovasz_softmax: every pixel is ignored");

    const Tensor flat = ad::gather_pixels(probs, valid);
    const std::size_t K = valid.size();
    Tensor total = Tensor::scalar(0.0);
    std::size_t present = 0;
    for (std::size_t c = 0; c < C; ++c) {
        std::vector<std::uint8_t> fg(K);
        std::vector<double> offset(K), sign(K);
        for (std::size_t i = 0; i < K; ++i) {
            fg[i] = gt[i] == static_cast<std::int32_t>(c) ? 1 : 0;
            offset[i] = fg[i] ? 1.0 : 0.0;
            sign[i] = fg[i] ? -1.0 : 1.0;
        }
        if (std::find(fg.begin(), fg.end(), std::uint8_t{1}) == fg.end()) continue;
        // |fg - p|: 1 - p on the class, p elsewhere
        const Tensor errors = ad::add(Tensor({K}, std::move(offset)), ad::mul(ad::select(flat, c), Tensor({K}, std::move(sign))));
        total = ad::add(total, lovasz_extension(errors, fg));
        ++present;
    }
    return ad::scale(total, 1.0 / static_cast<double>(present));
}

Tensor lovasz_softmax(const Tensor& logits, const LabelMap& labels) {
    return lovasz_softmax_probs(ad::softmax_channel(logits), labels);
}

Tensor fkl(const Tensor& logits, const LabelMap& labels, const FklConfig& cfg) {
    require_logits(logits, labels);
    std::vector<Pixel> from, to;
    std::vector<double> keep_kl;  // 1 - target
    for (std::size_t r = 0; r < labels.height(); ++r)
        for (std::size_t c = 0; c < labels.width(); ++c) {
            if (labels.ignored(r, c)) continue;
            const Pixel p{static_cast<std::ptrdiff_t>(r), static_cast<std::ptrdiff_t>(c)};
            for (const auto& o : kForwardNeighbours) {
                const Pixel q = p + o;
                if (!labels.labels.in_bounds(q) || labels.labels[q] == labels.ignore) continue;
                bool target = labels.labels[q] != labels(r, c);
                if (cfg.flip_target) target = !target;
                from.push_back(p);
                to.push_back(q);
                keep_kl.push_back(target ? 0.0 : 1.0);
            }
        }
    if (from.empty()) return Tensor::scalar(0.0);

    const Tensor probs = ad::softmax_channel(logits);
    const Tensor a = ad::gather_pixels(probs, from);
    const Tensor kl = columnwise_kl(a, ad::log(a), ad::gather_pixels(probs, to));
    // BCE(1/(1+e^kl), y) = softplus(kl) - (1-y)·kl
    const Tensor softplus = ad::log(ad::add_scalar(ad::exp(kl), 1.0));
    const std::size_t E = from.size();
    const Tensor per_edge = ad::sub(softplus, ad::mul(Tensor({E}, std::move(keep_kl)), kl));
    return ad::scale(ad::sum(per_edge), 1.0 / static_cast<double>(E));
}

LossReport composite(const Tensor& logits, const LabelMap& labels, const AblConfig& abl_cfg,
                     const TermWeights& weights, const FklConfig& fkl_cfg) {
    if (weights.ce < 0.0 || weights.iou < 0.0 || weights.boundary < 0.0) {
        throw std::invalid_argument("composite: term weights must be non-negative");
    }
    LossReport report;
    std::vector<Tensor> parts;
    const auto add_term = [&](const std::string& name, const Tensor& value, double w) {
        report.terms[name] = value.item();
        parts.push_back(ad::scale(value, w));
    };

    if (weights.ce > 0.0) add_term("ce", cross_entropy(logits, labels), weights.ce);
    if (weights.iou > 0.0) add_term("iou", lovasz_softmax(logits, labels), weights.iou);
    if (weights.boundary > 0.0) {
        if (weights.term == BoundaryTerm::abl) {
            auto r = abl(logits, labels, abl_cfg);
            report.n_b = r.retained();
            report.mean_pdb_distance = r.selection.mean_pdb_distance;
            add_term("abl", r.loss, weights.boundary);
        } else {
            add_term("fkl", fkl(logits, labels, fkl_cfg), weights.boundary);
        }
    }

    if (parts.empty()) {
        report.total = Tensor::scalar(0.0);
        return report;
    }
    report.total = parts.front();
    for (std::size_t i = 1; i < parts.size(); ++i) report.total = ad::add(report.total, parts[i]);
    return report;
}

}  // namespace abl::losses
