#include "abl/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "abl/losses.hpp"

namespace abl::gradcheck {

Comparison compare(const ScalarFn& fn, const ad::Tensor& at, double h, double floor) {
    ad::Graph graph;
    const auto x = graph.variable(at);
    const auto y = fn(x);
    std::vector<double> analytic(at.size(), 0.0);
    if (y.tracked()) {
        graph.backward(y);
        analytic = graph.gradient(x);
    }

    Comparison out;
    out.elements = at.size();
    std::vector<double> probe = at.values();
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + h;
        const double up = fn(ad::Tensor(at.shape(), probe)).item();
        probe[i] = orig - h;
        const double down = fn(ad::Tensor(at.shape(), probe)).item();
        probe[i] = orig;
        const double numeric = (up - down) / (2.0 * h);
        const double err = std::abs(numeric - analytic[i]);
        out.max_abs_err = std::max(out.max_abs_err, err);
        out.max_rel_err = std::max(out.max_rel_err, err / std::max({std::abs(numeric), std::abs(analytic[i]), floor}));
    }
    return out;
}

Instance random_instance(std::size_t classes, std::size_t height, std::size_t width, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> logit(-2.0, 2.0);
    std::vector<double> v(classes * height * width);
    for (auto& x : v) x = logit(rng);

    geometry::LabelMap labels(height, width, 0);
    const auto pick = [&](std::size_t lo, std::size_t hi) {
        return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
    };
    for (std::size_t cls = 1; cls < classes; ++cls) {
        const auto r0 = pick(0, height - 2), c0 = pick(0, width - 2);
        const auto r1 = pick(r0 + 1, height - 1), c1 = pick(c0 + 1, width - 1);
        for (auto r = r0; r <= r1; ++r)
            for (auto c = c0; c <= c1; ++c) labels(r, c) = static_cast<std::int32_t>(cls);
    }
    return {ad::Tensor({classes, height, width}, std::move(v)), std::move(labels)};
}

std::vector<LossCheck> loss_suite(std::uint64_t seed, int instances, double tol) {
    losses::AblConfig abl_cfg;
    abl_cfg.boundary_ratio = 0.15;  // an 8×8 map admits no pixel at the default 1%
    // Differencing sees the full derivative; a detached backward drops the
    // neighbour path on purpose, so it is checked separately.
    abl_cfg.detach = false;

    using Builder = std::function<ScalarFn(const Instance&)>;
    const std::vector<std::pair<std::string, Builder>> cases = {
        {"ce", [](const Instance& in) { return [&in](const ad::Tensor& x) { return losses::cross_entropy(x, in.labels); }; }},
        {"lovasz", [](const Instance& in) { return [&in](const ad::Tensor& x) { return losses::lovasz_softmax(x, in.labels); }; }},
        {"fkl", [](const Instance& in) { return [&in](const ad::Tensor& x) { return losses::fkl(x, in.labels); }; }},
        {"abl", [abl_cfg](const Instance& in) {
             const auto sel = std::make_shared<losses::AblSelection>(
                 losses::select_abl_pixels(ad::softmax_channel(in.logits), in.labels, abl_cfg));
             return [&in, sel, abl_cfg](const ad::Tensor& x) { return losses::abl(x, in.labels, abl_cfg, sel.get()).loss; };
         }},
    };

    std::vector<LossCheck> out;
    for (std::size_t k = 0; k < cases.size(); ++k) {
        LossCheck check{cases[k].first, 0.0, 0, true};
        for (int i = 0; i < instances; ++i) {
            const std::size_t classes = i % 2 == 0 ? 2 : 4;
            const auto inst = random_instance(classes, 8, 8, seed + 1000 * k + static_cast<std::uint64_t>(i));
            const auto cmp = compare(cases[k].second(inst), inst.logits);
            check.max_rel_err = std::max(check.max_rel_err, cmp.max_rel_err);
            ++check.instances;
        }
        check.passed = check.max_rel_err < tol;
        out.push_back(check);
    }
    return out;
}

}  // namespace abl::gradcheck
