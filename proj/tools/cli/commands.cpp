#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <ostream>
#include <thread>

#include <CLI11.hpp>

#include "abl/geometry.hpp"
#include "abl/gradcheck.hpp"
#include "abl/image_io.hpp"
#include "abl/metrics.hpp"
#include "abl/synthlab.hpp"

namespace abl::cli {

namespace fs = std::filesystem;

namespace {

std::string scene_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "scene_%04zu", index);
    return buf;
}

std::string overlay_name(int iter) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "overlay_%06d.ppm", iter);
    return buf;
}

std::size_t dimension(const RunConfig& cfg, const std::string& key) {
    const long v = cfg.integer(key);
    if (v < 1) throw ConfigError(key + " must be positive");
    return static_cast<std::size_t>(v);
}

std::uint64_t seed_of(const RunConfig& cfg) {
    const long v = cfg.integer("seed");
    if (v < 0) throw ConfigError("seed must be non-negative");
    return static_cast<std::uint64_t>(v);
}

synth::Scene make_scene(const RunConfig& cfg, std::size_t index) {
    const int blur = static_cast<int>(cfg.integer("blur"));
    const double noise = cfg.real("noise");
    if (blur < 0 || noise < 0.0) throw ConfigError("blur and noise must be non-negative");
    try {
        return synth::generate_scene(dimension(cfg, "classes"), dimension(cfg, "height"), dimension(cfg, "width"),
                                     cfg.shape_spec(), noise, blur, seed_of(cfg) + index);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

struct NamedScene {
    std::string name;
    synth::Scene scene;
};

std::vector<NamedScene> collect_scenes(const RunConfig& cfg) {
    std::vector<NamedScene> out;
    const auto& dir = cfg.text("scene_dir");
    if (dir.empty()) {
        const long n = cfg.integer("num_scenes");
        if (n < 1) throw ConfigError("num_scenes must be positive");
        for (long i = 0; i < n; ++i) out.push_back({scene_name(static_cast<std::size_t>(i)), make_scene(cfg, i)});
        return out;
    }
    if (!fs::is_directory(dir)) throw ConfigError("scene_dir " + dir + " is not a directory");
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory() && fs::exists(e.path() / "gt.pgm")) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) throw ConfigError("scene_dir " + dir + " holds no scenes");
    for (const auto& d : dirs) out.push_back({d.filename().string(), synth::load_scene(d)});
    return out;
}

void write_overlay(const fs::path& path, const synth::Scene& scene, const ad::Tensor& logits, double ratio) {
    const auto pred = synth::argmax_labels(logits, scene.gt.ignore);
    const auto pdb = geometry::detect_pdb(ad::softmax_channel(logits), ratio);
    io::write_ppm(path, io::boundary_overlay(pred, geometry::detect_gtb(scene.gt), pdb));
}

struct RunOutcome {
    std::optional<synth::LogRow> final_row;
    std::string error;
    bool diverged = false;
};

// Trains `model` on `scenes` and writes everything below `dir`. Per-scene
// artefacts go to `scene_dirs` (parallel to `scenes`).
RunOutcome train_into(synth::ToyModel& model, const std::vector<synth::Scene>& scenes,
                      const std::vector<fs::path>& scene_dirs, const synth::TrainConfig& tc, int overlay_every,
                      const fs::path& dir) {
    RunOutcome outcome;
    const auto dir_of = [&](const synth::Scene& s) {
        for (std::size_t i = 0; i < scenes.size(); ++i)
            if (&scenes[i] == &s) return scene_dirs[i];
        return dir;
    };
    const auto hook = [&](const synth::LogRow& row, const synth::Scene& s, const ad::Tensor& logits) {
        const bool wanted = row.iter == 0 || row.iter == tc.max_iter || (overlay_every > 0 && row.iter % overlay_every == 0);
        if (wanted) write_overlay(dir_of(s) / overlay_name(row.iter), s, logits, tc.abl.boundary_ratio);
    };
    fs::create_directories(dir);
    for (const auto& d : scene_dirs) fs::create_directories(d);
    try {
        const auto log = synth::train(model, scenes, tc, hook);
        std::ofstream csv(dir / "log.csv");
        log.write_csv(csv);
        outcome.final_row = log.final_row();
    } catch (const synth::DivergenceError& e) {
        outcome.error = e.what();
        outcome.diverged = true;
        return outcome;
    } catch (const ad::NumericalError& e) {
        outcome.error = e.what();
        outcome.diverged = true;
        return outcome;
    }
    model.save(dir / "model");
    for (std::size_t i = 0; i < scenes.size(); ++i)
        io::save_labels(scene_dirs[i] / "pred.pgm", synth::argmax_labels(model.predict(scenes[i]), scenes[i].gt.ignore));
    return outcome;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

int cmd_gen(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
    const long n = cfg.integer("num_scenes");
    if (n < 1) throw ConfigError("num_scenes must be positive");
    fs::create_directories(out);
    cfg.write(out / "config.resolved");
    for (long i = 0; i < n; ++i) {
        const auto scene = make_scene(cfg, static_cast<std::size_t>(i));
        synth::save_scene(out / scene_name(static_cast<std::size_t>(i)), scene);
    }
    log << "wrote " << n << " scenes to " << out.string() << '\n';
    return kOk;
}

int cmd_train(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
    const auto tc = cfg.train_config();
    const auto overlay_every = static_cast<int>(cfg.integer("overlay_every"));
    if (overlay_every < 0) throw ConfigError("overlay_every must be non-negative");
    const auto& mode = cfg.text("model");
    if (mode != "logit-field" && mode != "tiny-conv") throw ConfigError("model must be logit-field or tiny-conv");
    const auto scenes = collect_scenes(cfg);
    fs::create_directories(out);
    cfg.write(out / "config.resolved");

    std::vector<std::string> names;
    std::vector<RunOutcome> outcomes;
    if (mode == "tiny-conv") {
        std::vector<synth::Scene> all;
        std::vector<fs::path> dirs;
        for (const auto& s : scenes) {
            all.push_back(s.scene);
            dirs.push_back(out / s.name);
            if (s.scene.classes != scenes.front().scene.classes ||
                s.scene.features.shape()[0] != scenes.front().scene.features.shape()[0]) {
                throw ConfigError("tiny-conv needs scenes with a common class and feature count");
            }
        }
        const long hidden = cfg.integer("hidden"), model_seed = cfg.integer("model_seed");
        if (hidden < 1 || model_seed < 0) throw ConfigError("hidden must be positive and model_seed non-negative");
        auto model = synth::ToyModel::tiny_conv(all.front().features.shape()[0], all.front().classes,
                                                static_cast<std::uint64_t>(model_seed),
                                                static_cast<std::size_t>(hidden), cfg.real("init_std"));
        names.push_back("all");
        outcomes.push_back(train_into(model, all, dirs, tc, overlay_every, out));
    } else {
        const double temperature = cfg.real("init_temperature"), floor = cfg.real("feature_floor");
        if (!(floor > 0.0)) throw ConfigError("feature_floor must be positive");
        outcomes.resize(scenes.size());
        std::atomic<std::size_t> next{0};
        const auto worker = [&] {
            for (std::size_t i; (i = next++) < scenes.size();) {
                const auto& s = scenes[i];
                auto model = synth::ToyModel::logit_field(synth::logits_from_features(s.scene.features, temperature, floor));
                const auto dir = out / s.name;
                outcomes[i] = train_into(model, {s.scene}, {dir}, tc, overlay_every, dir);
            }
        };
        const auto threads = std::min(synth::thread_count_from_env(), scenes.size());
        std::vector<std::thread> pool;
        for (std::size_t k = 1; k < threads; ++k) pool.emplace_back(worker);
        worker();
        for (auto& t : pool) t.join();
        for (const auto& s : scenes) names.push_back(s.name);
    }

    std::ofstream summary(out / "summary.csv");
    summary << "run,status,total,n_b,mean_dist,pixacc,miou,f1,f3,f5\n";
    int code = kOk;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        const auto& o = outcomes[i];
        if (!o.final_row) {
            summary << names[i] << ",diverged,,,,,,,,\n";
            log << names[i] << ": " << o.error << '\n';
            code = kNumericalFailure;
            continue;
        }
        const auto& r = *o.final_row;
        summary << names[i] << ",ok," << num(r.total) << ',' << r.n_b << ',' << num(r.mean_dist) << ','
                << num(r.pix_acc) << ',' << num(r.miou) << ',' << num(r.f1) << ',' << num(r.f3) << ',' << num(r.f5)
                << '\n';
        log << names[i] << ": loss " << num(r.total) << " mean_dist " << num(r.mean_dist) << " F@1 " << num(r.f1)
            << '\n';
    }
    return code;
}

namespace {

// Image id of a label map: the parent directory for gt.pgm / pred.pgm,
// otherwise the path without extension, relative to `root`.
std::map<std::string, fs::path> label_files(const fs::path& root) {
    if (!fs::is_directory(root)) throw ConfigError(root.string() + " is not a directory");
    std::map<std::string, fs::path> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file() || e.path().extension() != ".pgm") continue;
        const auto rel = fs::relative(e.path(), root);
        const auto file = rel.filename().string();
        std::string id;
        if (file == "gt.pgm" || file == "pred.pgm") {
            id = rel.parent_path().generic_string();
        } else if (file == "sqdist.pgm") {
            continue;
        } else {
            id = (rel.parent_path() / rel.stem()).generic_string();
        }
        if (id.empty()) id = rel.stem().string();
        if (!out.emplace(id, e.path()).second) throw ConfigError("duplicate image id " + id + " in " + root.string());
    }
    return out;
}

}  // namespace

int cmd_eval(const RunConfig& cfg, const fs::path& out_csv, std::ostream& log) {
    const auto& pred_dir = cfg.text("pred_dir");
    const auto& gt_dir = cfg.text("gt_dir");
    if (pred_dir.empty() || gt_dir.empty()) throw ConfigError("eval needs pred_dir and gt_dir");
    const auto ignore = static_cast<std::int32_t>(cfg.integer("ignore"));
    const auto preds = label_files(pred_dir);
    const auto gts = label_files(gt_dir);
    for (const auto& [id, _] : gts)
        if (!preds.count(id)) throw ConfigError("no prediction for ground truth " + id);
    for (const auto& [id, _] : preds)
        if (!gts.count(id)) throw ConfigError("no ground truth for prediction " + id);
    if (gts.empty()) throw ConfigError("no label maps in " + gt_dir);

    std::vector<std::pair<std::string, std::pair<geometry::LabelMap, geometry::LabelMap>>> pairs;
    std::size_t classes = dimension(cfg, "classes");
    for (const auto& [id, gt_path] : gts) {
        auto gt = io::load_labels(gt_path, ignore);
        auto pred = io::load_labels(preds.at(id), ignore);
        for (const auto* m : {&gt, &pred})
            for (auto v : m->labels.data())
                if (v != ignore) classes = std::max(classes, static_cast<std::size_t>(v) + 1);
        pairs.push_back({id, {std::move(pred), std::move(gt)}});
    }

    std::ofstream file;
    if (!out_csv.empty()) {
        if (out_csv.has_parent_path()) fs::create_directories(out_csv.parent_path());
        file.open(out_csv);
        if (!file) throw std::runtime_error("cannot write " + out_csv.string());
    }
    std::ostream& os = out_csv.empty() ? log : file;
    metrics::write_csv_header(os, classes);
    std::vector<metrics::MetricReport> reports;
    for (const auto& [id, pg] : pairs) {
        reports.push_back(metrics::evaluate(pg.first, pg.second, classes));
        metrics::write_csv_row(os, id, reports.back());
    }
    metrics::write_csv_row(os, "mean", metrics::average(reports));
    if (!out_csv.empty()) log << "evaluated " << reports.size() << " images into " << out_csv.string() << '\n';
    return kOk;
}

int cmd_edt(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
    const auto& mask_path = cfg.text("mask");
    if (mask_path.empty()) throw ConfigError("edt needs a mask");
    const auto mask = io::load_mask(mask_path);
    if (mask.popcount() == 0) throw ConfigError("edt: mask " + mask_path + " has no set pixel");
    const auto d = geometry::edt(mask);
    fs::create_directories(out);
    io::save_sq_dist(out / "sqdist.pgm", d);
    std::ofstream csv(out / "dist.csv");
    csv << "row,col,sq_dist,dist\n";
    for (std::size_t r = 0; r < d.sq_dist.height(); ++r)
        for (std::size_t c = 0; c < d.sq_dist.width(); ++c)
            csv << r << ',' << c << ',' << d.sq_dist(r, c) << ',' << num(d.dist(r, c)) << '\n';
    if (!csv) throw std::runtime_error("cannot write " + (out / "dist.csv").string());
    const auto peak = *std::max_element(d.sq_dist.data().begin(), d.sq_dist.data().end());
    if (peak > io::kMaxStoredSqDist) log << "note: sqdist.pgm saturates above " << io::kMaxStoredSqDist << '\n';
    log << "edt " << d.sq_dist.height() << 'x' << d.sq_dist.width() << " written to " << out.string() << '\n';
    return kOk;
}

int cmd_gradcheck(const RunConfig& cfg, std::ostream& log) {
    const long instances = cfg.integer("gradcheck_instances");
    if (instances < 1) throw ConfigError("gradcheck_instances must be positive");
    const double tol = cfg.real("gradcheck_tol");
    bool ok = true;
    for (const auto& c : gradcheck::loss_suite(seed_of(cfg), static_cast<int>(instances), tol)) {
        char line[128];
        std::snprintf(line, sizeof line, "%-8s max_rel_err %.3e over %zu instances  %s", c.loss.c_str(), c.max_rel_err,
                      c.instances, c.passed ? "PASS" : "FAIL");
        log << line << '\n';
        ok = ok && c.passed;
    }
    return ok ? kOk : kNumericalFailure;
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Active boundary loss lab"};
    app.require_subcommand(1);

    struct Common {
        std::string config, out;
        std::optional<long> seed;
        std::optional<std::string> loss;
        std::optional<double> late_start;
        bool iou_decay = false;
        std::vector<std::string> sets;
    };
    Common common;
    std::string pred_dir, gt_dir, mask;

    const auto add_common = [&](CLI::App* sub, bool training_flags) {
        sub->add_option("--config", common.config, "key=value config file")->check(CLI::ExistingFile);
        sub->add_option("--out", common.out, "output directory (eval: CSV path)");
        sub->add_option("--seed", common.seed, "base seed");
        sub->add_option("--set", common.sets, "override one config key, as key=value");
        if (training_flags) {
            sub->add_option("--loss", common.loss, "ce | ce+iou | ce+iabl | ce+ifkl")
                ->check(CLI::IsMember({"ce", "ce+iou", "ce+iabl", "ce+ifkl"}));
            sub->add_option("--late-start", common.late_start, "fraction of final iterations with the boundary term on")
                ->check(CLI::Range(0.0, 1.0));
            sub->add_flag("--iou-decay", common.iou_decay, "decay the IoU weight while ramping the boundary weight");
        }
    };
    auto* gen = app.add_subcommand("gen", "generate synthetic scenes");
    add_common(gen, false);
    auto* train = app.add_subcommand("train", "train toy models and write run directories");
    add_common(train, true);
    auto* eval = app.add_subcommand("eval", "score predicted label maps against ground truth");
    add_common(eval, false);
    eval->add_option("--pred-dir", pred_dir, "directory of predictions");
    eval->add_option("--gt-dir", gt_dir, "directory of ground truth");
    auto* edt = app.add_subcommand("edt", "exact distance transform of a mask");
    add_common(edt, false);
    edt->add_option("mask", mask, "mask PGM (non-zero = set)");
    auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every loss");
    add_common(grad, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        for (auto* sub : app.get_subcommands()) err << sub->help();
        if (app.get_subcommands().empty()) err << app.help();
        return kUsageError;
    }

    try {
        RunConfig cfg;
        if (!common.config.empty()) cfg.load_file(common.config);
        for (const auto& kv : common.sets) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
            cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (common.seed) cfg.set("seed", std::to_string(*common.seed));
        if (common.loss) cfg.set("loss", *common.loss);
        if (common.late_start) cfg.set("late_start", num(*common.late_start));
        if (common.iou_decay) cfg.set("iou_decay", "true");
        if (!pred_dir.empty()) cfg.set("pred_dir", pred_dir);
        if (!gt_dir.empty()) cfg.set("gt_dir", gt_dir);
        if (!mask.empty()) cfg.set("mask", mask);

        const fs::path out_dir = common.out.empty() ? fs::path("run") : fs::path(common.out);
        if (*gen) return cmd_gen(cfg, out_dir, out);
        if (*train) return cmd_train(cfg, out_dir, out);
        if (*eval) return cmd_eval(cfg, common.out, out);
        if (*edt) return cmd_edt(cfg, out_dir, out);
        return cmd_gradcheck(cfg, out);
    } catch (const synth::DivergenceError& e) {
        err << "error: " << e.what() << '\n';
        return kNumericalFailure;
    } catch (const ad::NumericalError& e) {
        err << "error: " << e.what() << '\n';
        return kNumericalFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kUsageError;
    }
}

}  // namespace abl::cli
