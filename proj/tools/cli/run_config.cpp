#include "run_config.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>

namespace abl::cli {

const std::vector<KeySpec>& known_keys() {
    static const std::vector<KeySpec> keys = {
        // scenes
        {"classes", "3", "class count C including background 0"},
        {"height", "64", "scene height in pixels"},
        {"width", "64", "scene width in pixels"},
        {"discs", "2", "discs per scene"},
        {"rects", "1", "rectangles per scene"},
        {"lines", "2", "thin polylines per scene"},
        {"min_radius", "4", "smallest disc radius / rectangle half-extent"},
        {"max_radius", "10", "largest disc radius / rectangle half-extent"},
        {"max_line_width", "2", "polyline widths are drawn from 1..max_line_width (at most 3)"},
        {"line_vertices", "3", "vertices per polyline"},
        {"noise", "0.1", "std of Gaussian feature noise"},
        {"blur", "2", "box-blur radius of the feature evidence"},
        {"seed", "100", "first scene seed; scene i uses seed+i"},
        {"num_scenes", "10", "scenes generated by gen (and by train without scene_dir)"},
        {"scene_dir", "", "train: directory of scene_* folders written by gen; empty = generate in memory"},
        // model
        {"model", "logit-field", "logit-field | tiny-conv"},
        {"init_temperature", "1", "logit-field init: temperature * log(max(features, feature_floor))"},
        {"feature_floor", "0.05", "logit-field init: floor applied to features before the log"},
        {"hidden", "8", "tiny-conv hidden channels"},
        {"init_std", "0.1", "tiny-conv Gaussian weight init std"},
        {"model_seed", "0", "tiny-conv weight init seed"},
        // optimisation
        {"loss", "ce+iabl", "ce | ce+iou | ce+iabl | ce+ifkl"},
        {"lr0", "5", "initial learning rate"},
        {"power", "0.9", "poly schedule exponent"},
        {"max_iter", "300", "SGD steps"},
        {"w_a", "1.0", "boundary term weight (1.0 ade20k preset, 1.5 cityscapes preset)"},
        {"iou_decay", "false", "decay the IoU weight 1->0 while the boundary weight ramps 0->w_a"},
        {"late_start", "0", "fraction of final iterations with the boundary term on; 0 = always"},
        {"eval_every", "10", "metric evaluation period in iterations"},
        {"overlay_every", "0", "extra overlay period in iterations (0 = first and final only)"},
        // boundary loss
        {"theta", "20", "distance weight saturation"},
        {"smoothing_peak", "0.8", "label-smoothing mass on the target direction"},
        {"smoothing_rest", "0.028571428571428571", "label-smoothing mass on each other direction"},
        {"boundary_ratio", "0.01", "fraction of pixels admitted as predicted boundary"},
        {"detach", "true", "stop gradients through neighbour distributions"},
        {"fkl_flip_target", "false", "use the same-label-is-positive convention in the FKL term"},
        // eval / gradcheck
        {"ignore", "255", "ignore label"},
        {"pred_dir", "", "eval: directory of predicted label maps"},
        {"gt_dir", "", "eval: directory of ground-truth label maps"},
        {"mask", "", "edt: input mask PGM"},
        {"gradcheck_instances", "20", "gradcheck: random 8x8 instances per loss"},
        {"gradcheck_tol", "1e-4", "gradcheck: maximum relative error"},
    };
    return keys;
}

RunConfig::RunConfig() {
    for (const auto& k : known_keys()) values_[k.name] = k.default_value;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second = value;
}

void RunConfig::parse(std::istream& in, const std::string& origin) {
    std::string line;
    for (int n = 1; std::getline(in, line); ++n) {
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(n) + ": expected key=value");
        const auto key = trim(line.substr(0, eq));
        try {
            set(key, trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(n) + ": " + e.what());
        }
    }
}

void RunConfig::load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    parse(in, path.string());
}

const std::string& RunConfig::text(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
}

double RunConfig::real(const std::string& key) const {
    const auto& s = text(key);
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || *end != '\0' || errno == ERANGE) throw ConfigError(key + ": expected a number, got '" + s + "'");
    return v;
}

long RunConfig::integer(const std::string& key) const {
    const auto& s = text(key);
    char* end = nullptr;
    errno = 0;
    const long v = std::strtol(s.c_str(), &end, 10);
    if (s.empty() || *end != '\0' || errno == ERANGE) throw ConfigError(key + ": expected an integer, got '" + s + "'");
    return v;
}

bool RunConfig::flag(const std::string& key) const {
    const auto& s = text(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError(key + ": expected true or false, got '" + s + "'");
}

void RunConfig::write(std::ostream& os) const {
    for (const auto& k : known_keys()) os << "# " << k.doc << '\n' << k.name << " = " << values_.at(k.name) << '\n';
}

void RunConfig::write(const std::filesystem::path& path) const {
    std::ofstream out(path);
    write(out);
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

namespace {

int narrow(long v, const std::string& key) {
    if (v < 0 || v > 1'000'000'000) throw ConfigError(key + ": value out of range");
    return static_cast<int>(v);
}

}  // namespace

synth::ShapeSpec RunConfig::shape_spec() const {
    synth::ShapeSpec s;
    s.discs = narrow(integer("discs"), "discs");
    s.rects = narrow(integer("rects"), "rects");
    s.lines = narrow(integer("lines"), "lines");
    s.min_radius = narrow(integer("min_radius"), "min_radius");
    s.max_radius = narrow(integer("max_radius"), "max_radius");
    s.max_line_width = narrow(integer("max_line_width"), "max_line_width");
    s.line_vertices = narrow(integer("line_vertices"), "line_vertices");
    return s;
}

losses::AblConfig RunConfig::abl_config() const {
    losses::AblConfig a;
    a.theta = real("theta");
    a.smoothing_peak = real("smoothing_peak");
    a.smoothing_rest = real("smoothing_rest");
    a.boundary_ratio = real("boundary_ratio");
    a.detach = flag("detach");
    return a;
}

synth::TrainConfig RunConfig::train_config() const {
    synth::TrainConfig t;
    t.lr0 = real("lr0");
    t.power = real("power");
    t.max_iter = narrow(integer("max_iter"), "max_iter");
    try {
        t.regime = synth::parse_regime(text("loss"));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("loss: ") + e.what());
    }
    t.w_a = real("w_a");
    t.iou_decay = flag("iou_decay");
    t.late_start = real("late_start");
    t.eval_every = narrow(integer("eval_every"), "eval_every");
    t.abl = abl_config();
    t.fkl.flip_target = flag("fkl_flip_target");
    try {
        t.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return t;
}

}  // namespace abl::cli
