#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "abl/losses.hpp"
#include "support.hpp"

namespace {

using namespace abl;
using namespace abl::losses;
using ad::Tensor;
using geometry::LabelMap;

// ---------------------------------------------------------------------------
// Scalar oracle for the boundary loss. Everything is recomputed per pixel from
// plain arrays: softmax, forward-neighbour scores, the k-th largest threshold,
// dilation, brute-force distances and the weighted direction cross-entropy.

struct Field {
    std::size_t C, H, W;
    std::vector<double> p;  // C×H×W probabilities
    double at(std::size_t c, long r, long k) const { return p[(c * H + static_cast<std::size_t>(r)) * W + static_cast<std::size_t>(k)]; }
};

Field softmax_field(const std::vector<double>& logits, std::size_t C, std::size_t H, std::size_t W) {
    Field f{C, H, W, std::vector<double>(logits.size())};
    for (std::size_t i = 0; i < H * W; ++i) {
        double m = -INFINITY, z = 0.0;
        for (std::size_t c = 0; c < C; ++c) m = std::max(m, logits[c * H * W + i]);
        for (std::size_t c = 0; c < C; ++c) z += std::exp(logits[c * H * W + i] - m);
        for (std::size_t c = 0; c < C; ++c) f.p[c * H * W + i] = std::exp(logits[c * H * W + i] - m) / z;
    }
    return f;
}

double score_kl(const Field& f, long r, long c, long r2, long c2) {
    double s = 0.0;
    for (std::size_t k = 0; k < f.C; ++k) {
        const double a = std::clamp(f.at(k, r, c), 1e-12, 1.0), b = std::clamp(f.at(k, r2, c2), 1e-12, 1.0);
        s += a * std::log(a / b);
    }
    return s;
}

double direction_kl(const Field& centre, const Field& nb, long r, long c, long r2, long c2) {
    double s = 0.0;
    for (std::size_t k = 0; k < centre.C; ++k) {
        const double a = centre.at(k, r, c);
        s += a * (std::log(std::max(a, 1e-12)) - std::log(std::max(nb.at(k, r2, c2), 1e-12)));
    }
    return s;
}

constexpr long kDr[8] = {1, -1, 0, 0, -1, 1, -1, 1};
constexpr long kDc[8] = {0, 0, -1, 1, 1, 1, -1, -1};

struct OracleEntry {
    long r, c;
    int dir;
    double dist;
};

std::vector<OracleEntry> oracle_selection(const std::vector<double>& logits, const LabelMap& labels, std::size_t C,
                                          double ratio) {
    const auto H = labels.height(), W = labels.width();
    const auto f = softmax_field(logits, C, H, W);
    std::vector<double> score(H * W, 0.0);
    for (long r = 0; r < static_cast<long>(H); ++r)
        for (long c = 0; c < static_cast<long>(W); ++c) {
            double s = 0.0;
            if (r + 1 < static_cast<long>(H)) s = std::max(s, score_kl(f, r, c, r + 1, c));
            if (c + 1 < static_cast<long>(W)) s = std::max(s, score_kl(f, r, c, r, c + 1));
            score[static_cast<std::size_t>(r) * W + static_cast<std::size_t>(c)] = s;
        }
    auto sorted = score;
    std::sort(sorted.rbegin(), sorted.rend());
    const auto k = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(H * W)));
    const double eps = k == 0 ? sorted.front() : sorted[k - 1];

    geometry::BoundaryMap gtb(H, W);
    for (std::size_t r = 0; r < H; ++r)
        for (std::size_t c = 0; c < W; ++c) {
            const bool down = r + 1 < H && labels(r + 1, c) != labels(r, c);
            const bool right = c + 1 < W && labels(r, c + 1) != labels(r, c);
            gtb.set(r, c, down || right);
        }
    const auto sq = oracle::brute_sq_dist(gtb);
    const auto sqd = [&](long r, long c) { return sq[static_cast<std::size_t>(r) * W + static_cast<std::size_t>(c)]; };

    std::vector<OracleEntry> out;
    for (long r = 0; r < static_cast<long>(H); ++r)
        for (long c = 0; c < static_cast<long>(W); ++c) {
            bool near_pdb = false;
            for (long dr = -1; dr <= 1; ++dr)
                for (long dc = -1; dc <= 1; ++dc) {
                    const long rr = r + dr, cc = c + dc;
                    if (rr >= 0 && cc >= 0 && rr < static_cast<long>(H) && cc < static_cast<long>(W) &&
                        score[static_cast<std::size_t>(rr) * W + static_cast<std::size_t>(cc)] > eps)
                        near_pdb = true;
                }
            if (!near_pdb || sqd(r, c) == 0) continue;
            int best = -1;
            for (int d = 0; d < 8; ++d) {
                const long rr = r + kDr[d], cc = c + kDc[d];
                if (rr < 0 || cc < 0 || rr >= static_cast<long>(H) || cc >= static_cast<long>(W)) continue;
                if (best < 0 || sqd(rr, cc) < sqd(r + kDr[best], c + kDc[best])) best = d;
            }
            out.push_back({r, c, best, std::sqrt(static_cast<double>(sqd(r, c)))});
        }
    return out;
}

// Loss with centre distributions from `centre_logits` and neighbour
// distributions from `neighbour_logits`, over a fixed selection.
double oracle_abl(const std::vector<double>& centre_logits, const std::vector<double>& neighbour_logits,
                  const std::vector<OracleEntry>& sel, std::size_t C, std::size_t H, std::size_t W) {
    if (sel.empty()) return 0.0;
    const auto fc = softmax_field(centre_logits, C, H, W), fn = softmax_field(neighbour_logits, C, H, W);
    double total = 0.0;
    for (const auto& e : sel) {
        double logit[8];
        bool valid[8];
        double z = 0.0, tz = 0.0;
        for (int d = 0; d < 8; ++d) {
            const long rr = e.r + kDr[d], cc = e.c + kDc[d];
            valid[d] = rr >= 0 && cc >= 0 && rr < static_cast<long>(H) && cc < static_cast<long>(W);
            if (!valid[d]) continue;
            logit[d] = direction_kl(fc, fn, e.r, e.c, rr, cc);
            z += std::exp(logit[d]);
            tz += d == e.dir ? 0.8 : 0.2 / 7.0;
        }
        double ce = 0.0;
        for (int d = 0; d < 8; ++d) {
            if (!valid[d]) continue;
            const double target = (d == e.dir ? 0.8 : 0.2 / 7.0) / tz;
            ce -= target * (logit[d] - std::log(z));
        }
        total += std::min(e.dist, 20.0) / 20.0 * ce;
    }
    return total / static_cast<double>(sel.size());
}

// 8×8, two classes split between columns 3 and 4 (GTB on column 3); the
// prediction switches one column early, so the PDB sits on column 2.
struct ShiftedInstance {
    LabelMap labels;
    Tensor logits;
};

ShiftedInstance shifted_instance(std::uint64_t seed) {
    LabelMap labels(8, 8, 0);
    for (std::size_t r = 0; r < 8; ++r)
        for (std::size_t c = 4; c < 8; ++c) labels(r, c) = 1;
    auto noise = oracle::uniform_tensor({2, 8, 8}, seed, -0.2, 0.2);
    std::vector<double> v = noise.values();
    for (std::size_t r = 0; r < 8; ++r)
        for (std::size_t c = 0; c < 8; ++c) v[(c >= 3 ? 64 : 0) + r * 8 + c] += 3.0;
    return {labels, Tensor({2, 8, 8}, std::move(v))};
}

AblConfig wide_cfg(bool detach = true) {
    AblConfig cfg;
    cfg.boundary_ratio = 0.15;  // 9 of 64 pixels admissible
    cfg.detach = detach;
    return cfg;
}

TEST(RecipeConstants, DistanceWeight) {
    EXPECT_EQ(distance_weight(0.0, 20.0), 0.0);
    EXPECT_EQ(distance_weight(10.0, 20.0), 0.5);
    EXPECT_EQ(distance_weight(20.0, 20.0), 1.0);
    EXPECT_EQ(distance_weight(35.0, 20.0), 1.0);
}

TEST(RecipeConstants, Defaults) {
    const AblConfig cfg;
    EXPECT_EQ(cfg.theta, 20.0);
    EXPECT_EQ(cfg.smoothing_peak, 0.8);
    EXPECT_NEAR(cfg.smoothing_peak + 7 * cfg.smoothing_rest, 1.0, 1e-12);
    EXPECT_EQ(cfg.boundary_ratio, 0.01);
    EXPECT_TRUE(cfg.detach);
    EXPECT_EQ(TermWeights::ade20k().boundary, 1.0);
    EXPECT_EQ(TermWeights::cityscapes().boundary, 1.5);
    EXPECT_EQ(TermWeights::ade20k().ce, 1.0);
    EXPECT_EQ(TermWeights::ade20k().iou, 1.0);
}

TEST(SmoothedTarget, InteriorAndBorder) {
    const AblConfig cfg;
    const auto t = smoothed_target(4, 0xff, cfg);
    EXPECT_NEAR(std::accumulate(t.begin(), t.end(), 0.0), 1.0, 1e-12);
    EXPECT_EQ(t[4], 0.8);
    for (int k = 0; k < 8; ++k)
        if (k != 4) {
            EXPECT_EQ(t[static_cast<std::size_t>(k)], 0.2 / 7.0);
        }

    const std::uint8_t corner = (1u << 0) | (1u << 3) | (1u << 5);
    const auto b = smoothed_target(5, corner, cfg);
    EXPECT_NEAR(std::accumulate(b.begin(), b.end(), 0.0), 1.0, 1e-12);
    EXPECT_NEAR(b[5], 0.8 / (0.8 + 2 * 0.2 / 7.0), 1e-15);
    EXPECT_EQ(b[1], 0.0);
}

TEST(AblConfigTest, Validation) {
    AblConfig cfg;
    cfg.theta = 0.0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.smoothing_peak = 0.7;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.boundary_ratio = 0.0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(CrossEntropy, SaturatedAndUniform) {
    const auto labels = oracle::random_labels(4, 4, 3, 1);
    std::vector<double> v(48, 0.0);
    for (std::size_t i = 0; i < 16; ++i) v[static_cast<std::size_t>(labels.labels.data()[i]) * 16 + i] = 20.0;
    EXPECT_LT(cross_entropy(Tensor({3, 4, 4}, v), labels).item(), 1e-8);
    EXPECT_NEAR(cross_entropy(Tensor::zeros({3, 4, 4}), labels).item(), std::log(3.0), 1e-14);
}

TEST(CrossEntropy, IgnorePixelsAreExcluded) {
    auto labels = oracle::random_labels(4, 4, 3, 2);
    labels(0, 0) = labels.ignore;
    labels(2, 3) = labels.ignore;
    const auto x = oracle::uniform_tensor({3, 4, 4}, 3);
    const auto f = softmax_field(x.values(), 3, 4, 4);
    double s = 0.0;
    for (std::size_t i = 0; i < 16; ++i) {
        const auto l = labels.labels.data()[i];
        if (l == labels.ignore) continue;
        s -= std::log(f.p[static_cast<std::size_t>(l) * 16 + i]);
    }
    EXPECT_NEAR(cross_entropy(x, labels).item(), s / 14.0, 1e-14);

    LabelMap all(2, 2, 255);
    EXPECT_THROW(cross_entropy(Tensor::zeros({2, 2, 2}), all), std::invalid_argument);
}

TEST(CrossEntropy, Gradient) {
    const auto labels = oracle::random_labels(4, 4, 3, 4);
    EXPECT_LT(oracle::fd_rel_err([&](const Tensor& t) { return cross_entropy(t, labels); }, oracle::uniform_tensor({3, 4, 4}, 5)),
              1e-4);
}

TEST(CrossEntropy, RejectsOutOfRangeLabels) {
    LabelMap labels(2, 2, 0);
    labels(1, 1) = 3;
    EXPECT_THROW(cross_entropy(Tensor::zeros({3, 2, 2}), labels), std::invalid_argument);
}

TEST(DirectionLogitsTest, IdenticalNeighboursGiveUniform) {
    const auto probs = ad::softmax_channel(oracle::uniform_tensor({3, 1, 1}, 6));
    std::vector<double> v;
    for (std::size_t c = 0; c < 3; ++c) v.insert(v.end(), 9, probs[c]);
    const std::vector<Pixel> px{{1, 1}};
    const auto d = direction_distribution(Tensor({3, 3, 3}, v), px);
    for (double x : d.values()) EXPECT_NEAR(x, 1.0 / 8.0, 1e-15);
}

TEST(DirectionLogitsTest, OneDistinctNeighbourGetsTwoNinths) {
    for (std::size_t k = 0; k < 8; ++k) {
        std::vector<double> v(18, 0.0);
        for (std::size_t i = 0; i < 9; ++i) v[i] = 1.0;  // class 0 everywhere
        const auto q = Pixel{1, 1} + kDirections[k];
        const auto qi = static_cast<std::size_t>(q.row * 3 + q.col);
        v[qi] = 0.5;
        v[9 + qi] = 0.5;
        const std::vector<Pixel> px{{1, 1}};
        const auto d = direction_distribution(Tensor({2, 3, 3}, v), px);
        const auto dl = direction_logits(Tensor({2, 3, 3}, v), px);
        EXPECT_NEAR(dl.logits[k], std::log(2.0), 1e-15);
        for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(d[j], j == k ? 2.0 / 9.0 : 1.0 / 9.0, 1e-15) << k << "," << j;
    }
}

TEST(DirectionLogitsTest, BorderDirectionsAreMasked) {
    const auto probs = ad::softmax_channel(oracle::uniform_tensor({2, 3, 3}, 7));
    const std::vector<Pixel> px{{0, 0}};
    const auto d = direction_logits(probs, px);
    const std::vector<unsigned char> expect{1, 0, 0, 1, 0, 1, 0, 0};
    EXPECT_EQ(d.valid, expect);
    const auto dist = direction_distribution(probs, px);
    double s = 0.0;
    for (std::size_t k = 0; k < 8; ++k) {
        if (!expect[k]) {
            EXPECT_EQ(dist[k], 0.0);
        }
        s += dist[k];
    }
    EXPECT_NEAR(s, 1.0, 1e-15);
}

TEST(DirectionLogitsTest, NoGradientReachesNeighbourLogits) {
    const auto x = oracle::uniform_tensor({3, 5, 5}, 8);
    const std::vector<Pixel> px{{2, 2}};
    const auto grad = oracle::backward_grad(
        [&](const Tensor& t) { return oracle::weighted_sum(direction_distribution(ad::softmax_channel(t), px), 9); }, x);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < 25; ++i)
            if (i != 12) {
                EXPECT_EQ(grad[c * 25 + i], 0.0);
            }
    double centre = 0.0;
    for (std::size_t c = 0; c < 3; ++c) centre += std::abs(grad[c * 25 + 12]);
    EXPECT_GT(centre, 0.0);
}

TEST(Abl, MatchesScalarOracle) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto inst = shifted_instance(seed);
        const auto cfg = wide_cfg();
        const auto r = losses::abl(inst.logits, inst.labels, cfg);
        const auto sel = oracle_selection(inst.logits.values(), inst.labels, 2, cfg.boundary_ratio);
        ASSERT_FALSE(sel.empty());
        ASSERT_EQ(r.retained(), sel.size());
        for (std::size_t i = 0; i < sel.size(); ++i) {
            const auto& e = r.selection.targets.entries[i];
            EXPECT_EQ(e.pixel, (Pixel{sel[i].r, sel[i].c}));
            EXPECT_EQ(e.direction, sel[i].dir);
        }
        const double expect = oracle_abl(inst.logits.values(), inst.logits.values(), sel, 2, 8, 8);
        EXPECT_NEAR(r.loss.item(), expect, 1e-10);
        EXPECT_GT(r.loss.item(), 0.0);
        // The PDB is the column left of the GTB.
        EXPECT_EQ(r.selection.pdb_count, 8u);
        EXPECT_DOUBLE_EQ(r.selection.mean_pdb_distance, 1.0);
    }
}

TEST(Abl, FullGradientMatchesFiniteDifferences) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto inst = shifted_instance(10 + seed);
        const auto cfg = wide_cfg(false);
        const auto frozen = select_abl_pixels(ad::softmax_channel(inst.logits), inst.labels, cfg);
        const auto rel = oracle::fd_rel_err([&](const Tensor& t) { return losses::abl(t, inst.labels, cfg, &frozen).loss; }, inst.logits);
        EXPECT_LT(rel, 1e-4);
    }
}

TEST(Abl, DetachedGradientEqualsFrozenNeighbourDerivative) {
    // With detach on, backward is the derivative of the loss in which the
    // neighbour distributions are held at their base values.
    const auto inst = shifted_instance(20);
    const auto cfg = wide_cfg(true);
    const auto base = inst.logits.values();
    const auto sel = oracle_selection(base, inst.labels, 2, cfg.boundary_ratio);
    const auto frozen = select_abl_pixels(ad::softmax_channel(inst.logits), inst.labels, cfg);

    const auto analytic = oracle::backward_grad([&](const Tensor& t) { return losses::abl(t, inst.labels, cfg, &frozen).loss; }, inst.logits);
    const auto numeric = oracle::central_diff(
        [&](const Tensor& t) { return Tensor::scalar(oracle_abl(t.values(), base, sel, 2, 8, 8)); }, inst.logits);
    EXPECT_LT(oracle::worst_rel_err(analytic, numeric), 1e-4);
}

TEST(Abl, ZeroWhenPdbLiesOnGtb) {
    // Checkerboard labels put every pixel but the last on the GTB, so the
    // dilated PDB is entirely at distance 0.
    LabelMap labels(8, 8);
    for (std::size_t r = 0; r < 8; ++r)
        for (std::size_t c = 0; c < 8; ++c) labels(r, c) = static_cast<std::int32_t>((r + c) % 2);
    const auto inst = shifted_instance(30);
    const auto r = losses::abl(inst.logits, labels, wide_cfg());
    EXPECT_GT(r.selection.pdb_count, 0u);
    EXPECT_EQ(r.retained(), 0u);
    EXPECT_EQ(r.loss.item(), 0.0);
}

TEST(Abl, EmptyGtbOrPdbContributesZero) {
    const auto x = oracle::uniform_tensor({2, 8, 8}, 31);
    const auto r = losses::abl(x, LabelMap(8, 8, 1), wide_cfg());
    EXPECT_FALSE(r.selection.has_gtb);
    EXPECT_EQ(r.loss.item(), 0.0);
    EXPECT_FALSE(r.loss.tracked());

    const auto flat = losses::abl(Tensor::zeros({2, 8, 8}), shifted_instance(0).labels, wide_cfg());
    EXPECT_TRUE(flat.selection.has_gtb);
    EXPECT_EQ(flat.selection.pdb_count, 0u);
    EXPECT_EQ(flat.loss.item(), 0.0);
    // An 8×8 map admits no pixel at the default 1%.
    EXPECT_EQ(losses::abl(shifted_instance(0).logits, shifted_instance(0).labels, AblConfig{}).retained(), 0u);
}

TEST(Abl, NonNegativeOnRandomInstances) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto x = oracle::uniform_tensor({3, 8, 8}, 40 + seed);
        const auto labels = oracle::random_labels(8, 8, 3, 50 + seed);
        EXPECT_GE(losses::abl(x, labels, wide_cfg()).loss.item(), 0.0);
    }
}

TEST(Abl, GradientVanishesOutsideDilatedPdb) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto x = oracle::uniform_tensor({3, 12, 12}, 60 + seed);
        const auto labels = oracle::random_labels(12, 12, 3, 70 + seed);
        AblConfig cfg;
        cfg.boundary_ratio = 0.05;
        const auto sel = select_abl_pixels(ad::softmax_channel(x), labels, cfg);
        std::set<std::pair<long, long>> support;
        for (const auto& e : sel.targets.entries) support.insert({e.pixel.row, e.pixel.col});
        ASSERT_FALSE(support.empty());
        const auto grad = oracle::backward_grad([&](const Tensor& t) { return losses::abl(t, labels, cfg).loss; }, x);
        for (std::size_t c = 0; c < 3; ++c)
            for (long r = 0; r < 12; ++r)
                for (long k = 0; k < 12; ++k)
                    if (!support.count({r, k})) {
                        EXPECT_EQ(grad[c * 144 + static_cast<std::size_t>(r * 12 + k)], 0.0);
                    }
    }
}

TEST(Lovasz, ExtensionOnTwoPixels) {
    const std::vector<std::uint8_t> fg{1, 0};
    EXPECT_DOUBLE_EQ(lovasz_extension(Tensor({2}, {0.9, 0.1}), fg).item(), 0.9);
    EXPECT_DOUBLE_EQ(lovasz_extension(Tensor({2}, {0.1, 0.9}), fg).item(), 0.5 * 0.9 + 0.5 * 0.1);
}

// Jaccard loss of a set of mispredicted pixels.
double set_jaccard_loss(const std::vector<std::uint8_t>& fg, const std::vector<bool>& wrong) {
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < fg.size(); ++i) {
        const bool pred = fg[i] ? !wrong[i] : wrong[i];
        inter += fg[i] && pred;
        uni += fg[i] || pred;
    }
    return uni == 0 ? 0.0 : 1.0 - static_cast<double>(inter) / static_cast<double>(uni);
}

// Lovász extension as a sum over the greedy chain of sets.
double lovasz_oracle(const std::vector<double>& m, const std::vector<std::uint8_t>& fg) {
    std::vector<std::size_t> order(m.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return m[a] > m[b]; });
    std::vector<bool> wrong(m.size(), false);
    double prev = 0.0, total = 0.0;
    for (auto i : order) {
        wrong[i] = true;
        const double cur = set_jaccard_loss(fg, wrong);
        total += m[i] * (cur - prev);
        prev = cur;
    }
    return total;
}

TEST(Lovasz, ExtensionMatchesSetChain) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::vector<double> m(15);
        std::vector<std::uint8_t> fg(15);
        for (std::size_t i = 0; i < 15; ++i) {
            m[i] = u(rng);
            fg[i] = u(rng) < 0.4;
        }
        EXPECT_NEAR(lovasz_extension(Tensor({15}, m), fg).item(), lovasz_oracle(m, fg), 1e-12);
    }
}

TEST(Lovasz, CorrectOneHotIsZero) {
    const auto labels = oracle::random_labels(5, 5, 3, 80);
    std::vector<double> v(75, 0.0);
    for (std::size_t i = 0; i < 25; ++i) v[static_cast<std::size_t>(labels.labels.data()[i]) * 25 + i] = 1.0;
    EXPECT_EQ(lovasz_softmax_probs(Tensor({3, 5, 5}, v), labels).item(), 0.0);
}

TEST(Lovasz, VertexEqualsMeanJaccardLoss) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto gt = oracle::random_labels(6, 6, 3, 90 + seed);
        const auto pred = oracle::random_labels(6, 6, 3, 190 + seed);
        std::vector<double> v(108, 0.0);
        for (std::size_t i = 0; i < 36; ++i) v[static_cast<std::size_t>(pred.labels.data()[i]) * 36 + i] = 1.0;
        double total = 0.0;
        int present = 0;
        for (int c = 0; c < 3; ++c) {
            std::size_t inter = 0, uni = 0, in_gt = 0;
            for (std::size_t i = 0; i < 36; ++i) {
                const bool g = gt.labels.data()[i] == c, p = pred.labels.data()[i] == c;
                inter += g && p;
                uni += g || p;
                in_gt += g;
            }
            if (in_gt == 0) continue;
            total += 1.0 - static_cast<double>(inter) / static_cast<double>(uni);
            ++present;
        }
        EXPECT_NEAR(lovasz_softmax_probs(Tensor({3, 6, 6}, v), gt).item(), total / present, 1e-9);
    }
}

TEST(Lovasz, Gradient) {
    const auto labels = oracle::random_labels(4, 4, 3, 100);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        EXPECT_LT(oracle::fd_rel_err([&](const Tensor& t) { return lovasz_softmax(t, labels); },
                                     oracle::uniform_tensor({3, 4, 4}, 110 + seed)),
                  1e-4);
    }
}

TEST(Lovasz, IgnorePixelsAndAbsentClasses) {
    LabelMap labels(2, 2, 0);
    labels(0, 1) = 255;
    labels(1, 1) = 2;
    // Class 1 is absent; both remaining classes are predicted perfectly
    // except the ignored position, which must not matter.
    std::vector<double> v(12, 0.0);
    v[0] = v[2] = 1.0;   // class 0 at (0,0), (1,0)
    v[4 + 1] = 1.0;      // class 1 at the ignored pixel
    v[8 + 3] = 1.0;      // class 2 at (1,1)
    EXPECT_EQ(lovasz_softmax_probs(Tensor({3, 2, 2}, v), labels).item(), 0.0);
    EXPECT_THROW(lovasz_softmax(Tensor::zeros({2, 1, 1}), LabelMap(1, 1, 255)), std::invalid_argument);
}

double fkl_oracle(const std::vector<double>& logits, const LabelMap& labels, std::size_t C, bool flip) {
    const auto H = labels.height(), W = labels.width();
    const auto f = softmax_field(logits, C, H, W);
    double total = 0.0;
    std::size_t edges = 0;
    for (long r = 0; r < static_cast<long>(H); ++r)
        for (long c = 0; c < static_cast<long>(W); ++c) {
            if (labels.ignored(static_cast<std::size_t>(r), static_cast<std::size_t>(c))) continue;
            for (const auto& [dr, dc] : {std::pair<long, long>{1, 0}, {0, 1}}) {
                const long rr = r + dr, cc = c + dc;
                if (rr >= static_cast<long>(H) || cc >= static_cast<long>(W)) continue;
                if (labels.ignored(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc))) continue;
                const double kl = direction_kl(f, f, r, c, rr, cc);
                const double sigma = 1.0 / (1.0 + std::exp(kl));
                bool y = labels(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) !=
                         labels(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc));
                if (flip) y = !y;
                total -= y ? std::log(sigma) : std::log(1.0 - sigma);
                ++edges;
            }
        }
    return edges ? total / static_cast<double>(edges) : 0.0;
}

TEST(Fkl, IdenticalDistributionsGiveLogTwo) {
    EXPECT_NEAR(fkl(Tensor::zeros({2, 3, 3}), LabelMap(3, 3, 0)).item(), std::log(2.0), 1e-15);
    LabelMap mixed(1, 2, 0);
    mixed(0, 1) = 1;
    EXPECT_NEAR(fkl(Tensor::zeros({2, 1, 2}), mixed).item(), std::log(2.0), 1e-15);
}

TEST(Fkl, MatchesScalarOracle) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto x = oracle::uniform_tensor({3, 5, 6}, 120 + seed);
        auto labels = oracle::random_labels(5, 6, 3, 130 + seed);
        labels(2, 2) = labels.ignore;
        for (bool flip : {false, true}) {
            EXPECT_NEAR(fkl(x, labels, FklConfig{flip}).item(), fkl_oracle(x.values(), labels, 3, flip), 1e-12);
        }
    }
}

TEST(Fkl, GradientAndDegenerateCases) {
    const auto labels = oracle::random_labels(4, 4, 2, 140);
    EXPECT_LT(oracle::fd_rel_err([&](const Tensor& t) { return fkl(t, labels); }, oracle::uniform_tensor({2, 4, 4}, 141)), 1e-4);
    EXPECT_EQ(fkl(Tensor::zeros({2, 1, 1}), LabelMap(1, 1, 0)).item(), 0.0);
    EXPECT_GE(fkl(oracle::uniform_tensor({2, 4, 4}, 142), labels).item(), 0.0);
}

TEST(Composite, ZeroBoundaryWeightIsCePlusIou) {
    const auto x = oracle::uniform_tensor({3, 8, 8}, 150);
    const auto labels = oracle::random_labels(8, 8, 3, 151);
    TermWeights w = TermWeights::ade20k();
    w.boundary = 0.0;
    const auto r = composite(x, labels, wide_cfg(), w);
    EXPECT_EQ(r.total.item(), cross_entropy(x, labels).item() + lovasz_softmax(x, labels).item());
    EXPECT_EQ(r.terms.count("abl"), 0u);
    EXPECT_EQ(r.n_b, 0u);
}

TEST(Composite, TotalIsWeightedSumOfTerms) {
    const auto inst = shifted_instance(160);
    for (const auto& w : {TermWeights::ade20k(), TermWeights::cityscapes(),
                          TermWeights{0.5, 2.0, 1.5, BoundaryTerm::fkl}}) {
        const auto r = composite(inst.logits, inst.labels, wide_cfg(), w);
        const std::string b = w.term == BoundaryTerm::abl ? "abl" : "fkl";
        ASSERT_EQ(r.terms.size(), 3u);
        EXPECT_NEAR(r.total.item(), w.ce * r.terms.at("ce") + w.iou * r.terms.at("iou") + w.boundary * r.terms.at(b), 1e-9);
        if (w.term == BoundaryTerm::abl) {
            EXPECT_GT(r.n_b, 0u);
            EXPECT_DOUBLE_EQ(r.terms.at("abl"), losses::abl(inst.logits, inst.labels, wide_cfg()).loss.item());
        } else {
            EXPECT_DOUBLE_EQ(r.terms.at("fkl"), fkl(inst.logits, inst.labels).item());
        }
    }
    EXPECT_THROW(composite(inst.logits, inst.labels, wide_cfg(), TermWeights{-1.0, 1.0, 1.0}), std::invalid_argument);
}

}  // namespace
