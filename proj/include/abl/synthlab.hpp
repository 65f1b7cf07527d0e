#pragma once

// Desk-scale training lab: synthetic scenes with thin structures, a toy
// segmentation model and a plain SGD loop with the poly schedule.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "abl/geometry.hpp"
#include "abl/losses.hpp"
#include "abl/metrics.hpp"
#include "abl/tensor.hpp"

namespace abl::synth {

struct ShapeSpec {
    int discs = 2;
    int rects = 1;
    int lines = 2;           // polylines; these are the thin structures
    int min_radius = 4;
    int max_radius = 10;
    int max_line_width = 2;  // line widths are drawn from [1, max_line_width], at most 3
    int line_vertices = 3;

    void validate(std::size_t height, std::size_t width) const;
};

struct Scene {
    geometry::LabelMap gt;
    ad::Tensor features;  // F×H×W, F equals the class count
    std::size_t classes = 0;
    std::uint64_t seed = 0;
};

/// One-hot encoding of `labels` box-blurred with the given radius (mean over
/// the in-bounds window) plus i.i.d. Gaussian noise drawn from `rng`.
ad::Tensor features_from_labels(const geometry::LabelMap& labels, std::size_t classes, double noise,
                                int blur_radius, std::mt19937_64& rng);

/// Mean over the in-bounds (2r+1)×(2r+1) window, per channel of a C×H×W tensor.
ad::Tensor box_blur(const ad::Tensor& image, int radius);

Scene generate_scene(std::size_t classes, std::size_t height, std::size_t width, const ShapeSpec& shapes,
                     double noise, int blur_radius, std::uint64_t seed);

/// lr0 · (1 - t/max_iter)^power.
double poly_lr(double lr0, int t, int max_iter, double power = 0.9);

/// temperature · log(max(features, floor)), the blurred-evidence initialisation
/// of a logit field.
ad::Tensor logits_from_features(const ad::Tensor& features, double temperature, double floor = 1e-3);

enum class ModelMode { logit_field, tiny_conv };

struct NamedTensor {
    std::string name;
    ad::Tensor value;
};

class ToyModel {
public:
    /// Free per-pixel logits, initialised from `init` (C×H×W).
    static ToyModel logit_field(const ad::Tensor& init);
    /// conv3x3(F→hidden) → relu → conv3x3(hidden→C) with seeded Gaussian init.
    static ToyModel tiny_conv(std::size_t features, std::size_t classes, std::uint64_t seed,
                              std::size_t hidden = 8, double init_std = 0.1);

    ModelMode mode() const { return mode_; }
    std::vector<NamedTensor>& parameters() { return params_; }
    const std::vector<NamedTensor>& parameters() const { return params_; }

    /// Logits for `scene`, with every parameter registered on `graph`.
    /// `tracked` receives the graph tensors in parameter order.
    ad::Tensor forward(ad::Graph& graph, const Scene& scene, std::vector<ad::Tensor>& tracked) const;
    /// Logits evaluated without recording a graph.
    ad::Tensor predict(const Scene& scene) const;

    void save(const std::filesystem::path& stem) const;
    static ToyModel load(const std::filesystem::path& stem);

private:
    ModelMode mode_ = ModelMode::logit_field;
    std::vector<NamedTensor> params_;
};

enum class Regime { ce, ce_iou, ce_iabl, ce_ifkl };

Regime parse_regime(const std::string& name);
std::string to_string(Regime regime);

struct TrainConfig {
    double lr0 = 0.01;
    double power = 0.9;
    int max_iter = 100;
    Regime regime = Regime::ce_iabl;
    double w_a = 1.0;
    bool iou_decay = false;
    double late_start = 0.0;  // fraction of final iterations with the boundary term on; 0 = always
    int eval_every = 10;
    losses::AblConfig abl;
    losses::FklConfig fkl;

    void validate() const;
};

/// Term weights in effect at iteration t.
losses::TermWeights weights_at(const TrainConfig& cfg, int t);

struct LogRow {
    int iter = 0;
    double lr = 0.0;
    double total = 0.0, ce = 0.0, iou = 0.0, abl = 0.0, fkl = 0.0;
    std::size_t n_b = 0;
    double mean_dist = 0.0;
    bool evaluated = false;
    double pix_acc = 0.0, miou = 0.0, f1 = 0.0, f3 = 0.0, f5 = 0.0;
};

struct TrainingLog {
    std::vector<LogRow> rows;

    void write_csv(std::ostream& os) const;
    const LogRow& final_row() const { return rows.back(); }
};

class DivergenceError : public std::runtime_error {
public:
    DivergenceError(int iter, const std::string& what)
        : std::runtime_error("diverged at iteration " + std::to_string(iter) + ": " + what), iter_(iter) {}
    int iter() const { return iter_; }

private:
    int iter_;
};

/// Label map of per-pixel argmax (ties go to the lower class).
geometry::LabelMap argmax_labels(const ad::Tensor& logits, std::int32_t ignore = geometry::kDefaultIgnore);

/// Called for every evaluated row with the logits the row was computed from.
using EvalHook = std::function<void(const LogRow& row, const Scene& scene, const ad::Tensor& logits)>;

/// Plain SGD on the composite loss, cycling through `scenes` one per step.
/// Rows are logged for iterations 0..max_iter; the last row is evaluated
/// after the final step. A logit-field model needs exactly one scene.
TrainingLog train(ToyModel& model, const std::vector<Scene>& scenes, const TrainConfig& cfg,
                  const EvalHook& on_eval = {});

/// Raw little-endian f64 dump `<stem>.bin` with a JSON sidecar `<stem>.json`
/// listing name, shape and byte offset of every tensor. `extra` is merged
/// into the sidecar's top level.
void save_tensors(const std::filesystem::path& stem, const std::vector<NamedTensor>& tensors,
                  const std::map<std::string, std::string>& extra = {});
std::vector<NamedTensor> load_tensors(const std::filesystem::path& stem,
                                      std::map<std::string, std::string>* extra = nullptr);

/// gt.pgm, features.bin/json and preview.ppm inside `dir`.
void save_scene(const std::filesystem::path& dir, const Scene& scene);
Scene load_scene(const std::filesystem::path& dir);

std::size_t thread_count_from_env();

}  // namespace abl::synth
