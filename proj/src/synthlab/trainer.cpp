#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "abl/synthlab.hpp"

namespace abl::synth {

Regime parse_regime(const std::string& name) {
    if (name == "ce") return Regime::ce;
    if (name == "ce+iou") return Regime::ce_iou;
    if (name == "ce+iabl") return Regime::ce_iabl;
    if (name == "ce+ifkl") return Regime::ce_ifkl;
    throw std::invalid_argument("unknown loss regime '" + name + "' (expected ce, ce+iou, ce+iabl, ce+ifkl)");
}

std::string to_string(Regime regime) {
    switch (regime) {
        case Regime::ce: return "ce";
        case Regime::ce_iou: return "ce+iou";
        case Regime::ce_iabl: return "ce+iabl";
        case Regime::ce_ifkl: return "ce+ifkl";
    }
    return "?";
}

void TrainConfig::validate() const {
    if (lr0 < 0.0) throw std::invalid_argument("train: lr0 must be non-negative");
    if (max_iter <= 0) throw std::invalid_argument("train: max_iter must be positive");
    if (power < 0.0) throw std::invalid_argument("train: power must be non-negative");
    if (w_a < 0.0) throw std::invalid_argument("train: w_a must be non-negative");
    if (late_start < 0.0 || late_start > 1.0) throw std::invalid_argument("train: late_start must lie in [0,1]");
    if (eval_every <= 0) throw std::invalid_argument("train: eval_every must be positive");
    abl.validate();
}

losses::TermWeights weights_at(const TrainConfig& cfg, int t) {
    losses::TermWeights w{1.0, 0.0, 0.0, losses::BoundaryTerm::abl};
    if (cfg.regime == Regime::ce) return w;
    w.iou = 1.0;
    if (cfg.regime == Regime::ce_iou) return w;
    w.term = cfg.regime == Regime::ce_ifkl ? losses::BoundaryTerm::fkl : losses::BoundaryTerm::abl;
    w.boundary = cfg.w_a;

    const double progress = static_cast<double>(t) / static_cast<double>(cfg.max_iter);
    if (cfg.iou_decay) {
        w.iou = 1.0 - progress;
        w.boundary = cfg.w_a * progress;
    }
    if (cfg.late_start > 0.0 && static_cast<double>(t) < (1.0 - cfg.late_start) * cfg.max_iter) w.boundary = 0.0;
    return w;
}

geometry::LabelMap argmax_labels(const ad::Tensor& logits, std::int32_t ignore) {
    if (logits.rank() != 3) throw ad::ShapeError("argmax_labels: expected C×H×W");
    const auto C = logits.shape()[0], H = logits.shape()[1], W = logits.shape()[2];
    geometry::LabelMap out(H, W, 0, ignore);
    for (std::size_t i = 0; i < H * W; ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < C; ++c)
            if (logits[c * H * W + i] > logits[best * H * W + i]) best = c;
        out.labels.data()[i] = static_cast<std::int32_t>(best);
    }
    return out;
}

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

void TrainingLog::write_csv(std::ostream& os) const {
    os << "iter,lr,total,ce,iou,abl,fkl,n_b,mean_dist,pixacc,miou,f1,f3,f5\n";
    for (const auto& r : rows) {
        os << r.iter << ',' << num(r.lr) << ',' << num(r.total) << ',' << num(r.ce) << ',' << num(r.iou) << ','
           << num(r.abl) << ',' << num(r.fkl) << ',' << r.n_b << ',' << num(r.mean_dist);
        if (r.evaluated) {
            os << ',' << num(r.pix_acc) << ',' << num(r.miou) << ',' << num(r.f1) << ',' << num(r.f3) << ','
               << num(r.f5);
        } else {
            os << ",,,,,";
        }
        os << '\n';
    }
}

TrainingLog train(ToyModel& model, const std::vector<Scene>& scenes, const TrainConfig& cfg,
                  const EvalHook& on_eval) {
    cfg.validate();
    if (scenes.empty()) throw std::invalid_argument("train: no scenes");
    if (model.mode() == ModelMode::logit_field && scenes.size() != 1) {
        throw std::invalid_argument("train: a logit field is tied to exactly one scene");
    }

    TrainingLog log;
    log.rows.reserve(static_cast<std::size_t>(cfg.max_iter) + 1);
    for (int t = 0; t <= cfg.max_iter; ++t) {
        const Scene& scene = scenes[static_cast<std::size_t>(t) % scenes.size()];
        const bool last = t == cfg.max_iter;

        ad::Graph graph;
        std::vector<ad::Tensor> params;
        const ad::Tensor logits = model.forward(graph, scene, params);
        const auto weights = weights_at(cfg, t);
        losses::LossReport report;
        try {
            report = losses::composite(logits, scene.gt, cfg.abl, weights, cfg.fkl);
        } catch (const ad::NumericalError& e) {
            throw DivergenceError(t, e.what());
        }

        LogRow row;
        row.iter = t;
        row.lr = poly_lr(cfg.lr0, t, cfg.max_iter, cfg.power);
        row.total = report.total.item();
        const auto term = [&](const char* name) {
            const auto it = report.terms.find(name);
            return it == report.terms.end() ? 0.0 : it->second;
        };
        row.ce = term("ce");
        row.iou = term("iou");
        row.abl = term("abl");
        row.fkl = term("fkl");
        if (!std::isfinite(row.total)) throw DivergenceError(t, "non-finite loss");

        // Boundary diagnostics are logged for every regime.
        const auto probs = ad::softmax_channel(ad::stop_gradient(logits));
        const auto sel = losses::select_abl_pixels(probs, scene.gt, cfg.abl);
        row.n_b = sel.targets.entries.size();
        row.mean_dist = sel.mean_pdb_distance;

        if (last || t % cfg.eval_every == 0) {
            const auto m = metrics::evaluate(argmax_labels(logits, scene.gt.ignore), scene.gt, scene.classes);
            row.evaluated = true;
            row.pix_acc = m.pix_acc;
            row.miou = m.miou;
            row.f1 = m.boundary_f.at(1).mean;
            row.f3 = m.boundary_f.at(3).mean;
            row.f5 = m.boundary_f.at(5).mean;
            if (on_eval) on_eval(row, scene, logits);
        }
        log.rows.push_back(row);
        if (last) break;

        if (report.total.tracked() && row.lr != 0.0) {
            graph.backward(report.total);
            auto& stored = model.parameters();
            for (std::size_t i = 0; i < stored.size(); ++i) {
                const auto g = graph.gradient(params[i]);
                std::vector<double> v = stored[i].value.values();
                for (std::size_t k = 0; k < v.size(); ++k) {
                    v[k] -= row.lr * g[k];
                    if (!std::isfinite(v[k])) throw DivergenceError(t, "non-finite parameter " + stored[i].name);
                }
                stored[i].value = ad::Tensor(stored[i].value.shape(), std::move(v));
            }
        }
    }
    return log;
}

std::size_t thread_count_from_env() {
    const char* env = std::getenv("ABL_THREADS");
    if (!env || !*env) return 1;
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (*end != '\0' || n < 1) throw std::invalid_argument("ABL_THREADS must be a positive integer");
    return static_cast<std::size_t>(n);
}

}  // namespace abl::synth
