#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "abl/image_io.hpp"
#include "abl/synthlab.hpp"

namespace abl::synth {

ToyModel ToyModel::logit_field(const ad::Tensor& init) {
    if (init.rank() != 3) throw ad::ShapeError("logit_field: expected C×H×W initial logits");
    ToyModel m;
    m.mode_ = ModelMode::logit_field;
    m.params_.push_back({"logits", ad::Tensor(init.shape(), init.values())});
    return m;
}

ToyModel ToyModel::tiny_conv(std::size_t features, std::size_t classes, std::uint64_t seed, std::size_t hidden,
                             double init_std) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, init_std);
    const auto random = [&](ad::Shape shape) {
        std::vector<double> v(ad::element_count(shape));
        for (auto& x : v) x = gauss(rng);
        return ad::Tensor(std::move(shape), std::move(v));
    };
    ToyModel m;
    m.mode_ = ModelMode::tiny_conv;
    m.params_.push_back({"conv1.weight", random({hidden, features, 3, 3})});
    m.params_.push_back({"conv1.bias", ad::Tensor::zeros({hidden})});
    m.params_.push_back({"conv2.weight", random({classes, hidden, 3, 3})});
    m.params_.push_back({"conv2.bias", ad::Tensor::zeros({classes})});
    return m;
}

namespace {

template <class Params>
ad::Tensor run(ModelMode mode, const Params& p, const Scene& scene) {
    if (mode == ModelMode::logit_field) return p[0];
    const auto hidden = ad::relu(ad::conv3x3(scene.features, p[0], p[1]));
    return ad::conv3x3(hidden, p[2], p[3]);
}

}  // namespace

ad::Tensor ToyModel::forward(ad::Graph& graph, const Scene& scene, std::vector<ad::Tensor>& tracked) const {
    tracked.clear();
    for (const auto& p : params_) tracked.push_back(graph.variable(p.value));
    return run(mode_, tracked, scene);
}

ad::Tensor ToyModel::predict(const Scene& scene) const {
    std::vector<ad::Tensor> values;
    for (const auto& p : params_) values.push_back(p.value);
    return run(mode_, values, scene);
}

namespace {

std::filesystem::path with_suffix(std::filesystem::path stem, const char* suffix) {
    stem += suffix;
    return stem;
}

}  // namespace

void save_tensors(const std::filesystem::path& stem, const std::vector<NamedTensor>& tensors,
                  const std::map<std::string, std::string>& extra) {
    static_assert(std::endian::native == std::endian::little, "tensor dump assumes a little-endian host");
    const auto bin_path = with_suffix(stem, ".bin");
    std::ofstream bin(bin_path, std::ios::binary);
    if (!bin) throw std::runtime_error("cannot write " + bin_path.string());

    nlohmann::json meta;
    for (const auto& [k, v] : extra) meta[k] = v;
    meta["format"] = "f64le";
    meta["data"] = bin_path.filename().string();
    meta["tensors"] = nlohmann::json::array();
    std::size_t offset = 0;
    for (const auto& t : tensors) {
        bin.write(reinterpret_cast<const char*>(t.value.values().data()),
                  static_cast<std::streamsize>(t.value.size() * sizeof(double)));
        meta["tensors"].push_back({{"name", t.name}, {"shape", t.value.shape()}, {"offset", offset}});
        offset += t.value.size() * sizeof(double);
    }
    std::ofstream js(with_suffix(stem, ".json"));
    js << meta.dump(2) << '\n';
    if (!bin || !js) throw std::runtime_error("failed writing " + stem.string());
}

std::vector<NamedTensor> load_tensors(const std::filesystem::path& stem, std::map<std::string, std::string>* extra) {
    const auto json_path = with_suffix(stem, ".json");
    std::ifstream js(json_path);
    if (!js) throw std::runtime_error("cannot open " + json_path.string());
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(js);
        if (meta.at("format") != "f64le") throw std::runtime_error("unsupported tensor format in " + json_path.string());
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("malformed " + json_path.string() + ": " + e.what());
    }

    const auto bin_path = stem.parent_path() / meta.at("data").get<std::string>();
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw std::runtime_error("cannot open " + bin_path.string());

    std::vector<NamedTensor> out;
    for (const auto& t : meta.at("tensors")) {
        const auto shape = t.at("shape").get<ad::Shape>();
        std::vector<double> v(ad::element_count(shape));
        bin.seekg(static_cast<std::streamoff>(t.at("offset").get<std::size_t>()));
        if (!bin.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)))) {
            throw std::runtime_error("tensor data truncated in " + bin_path.string());
        }
        out.push_back({t.at("name").get<std::string>(), ad::Tensor(shape, std::move(v))});
    }
    if (extra) {
        for (const auto& [k, v] : meta.items())
            if (v.is_string()) (*extra)[k] = v.get<std::string>();
    }
    return out;
}

void ToyModel::save(const std::filesystem::path& stem) const {
    save_tensors(stem, params_, {{"mode", mode_ == ModelMode::logit_field ? "logit-field" : "tiny-conv"}});
}

ToyModel ToyModel::load(const std::filesystem::path& stem) {
    std::map<std::string, std::string> extra;
    ToyModel m;
    m.params_ = load_tensors(stem, &extra);
    const auto mode = extra["mode"];
    if (mode == "logit-field") {
        m.mode_ = ModelMode::logit_field;
        if (m.params_.size() != 1) throw std::runtime_error("logit-field checkpoint must hold one tensor");
    } else if (mode == "tiny-conv") {
        m.mode_ = ModelMode::tiny_conv;
        if (m.params_.size() != 4) throw std::runtime_error("tiny-conv checkpoint must hold four tensors");
    } else {
        throw std::runtime_error("unknown model mode '" + mode + "' in " + stem.string());
    }
    return m;
}

void save_scene(const std::filesystem::path& dir, const Scene& scene) {
    std::filesystem::create_directories(dir);
    io::save_labels(dir / "gt.pgm", scene.gt);
    save_tensors(dir / "features", {{"features", scene.features}},
                 {{"classes", std::to_string(scene.classes)}, {"seed", std::to_string(scene.seed)}});

    // Preview: class colours mixed by the (clamped) feature evidence.
    const auto F = scene.features.shape()[0], H = scene.features.shape()[1], W = scene.features.shape()[2];
    Grid<io::Rgb> preview(H, W, io::Rgb{0, 0, 0});
    for (std::size_t i = 0; i < H * W; ++i) {
        std::array<double, 3> mix{0.0, 0.0, 0.0};
        double total = 0.0;
        for (std::size_t f = 0; f < F; ++f) {
            const double w = std::clamp(scene.features[f * H * W + i], 0.0, 1.0);
            const auto col = io::class_colour(static_cast<std::int32_t>(f));
            for (int k = 0; k < 3; ++k) mix[k] += w * col[k];
            total += w;
        }
        auto& px = preview.data()[i];
        for (int k = 0; k < 3; ++k)
            px[k] = static_cast<std::uint8_t>(total > 0.0 ? std::clamp(mix[k] / total, 0.0, 255.0) : 0.0);
    }
    io::write_ppm(dir / "preview.ppm", preview);
}

Scene load_scene(const std::filesystem::path& dir) {
    std::map<std::string, std::string> extra;
    auto tensors = load_tensors(dir / "features", &extra);
    if (tensors.size() != 1 || tensors[0].value.rank() != 3) {
        throw std::runtime_error(dir.string() + ": features must be a single C×H×W tensor");
    }
    Scene s;
    s.features = std::move(tensors[0].value);
    s.gt = io::load_labels(dir / "gt.pgm");
    try {
        s.classes = std::stoul(extra.at("classes"));
        s.seed = std::stoull(extra.count("seed") ? extra.at("seed") : "0");
    } catch (const std::exception&) {
        throw std::runtime_error(dir.string() + ": features.json lacks a valid class count");
    }
    if (s.features.shape()[1] != s.gt.labels.height() || s.features.shape()[2] != s.gt.labels.width()) {
        throw std::runtime_error(dir.string() + ": features and gt.pgm differ in size");
    }
    s.gt.validate(s.classes);
    return s;
}

}  // namespace abl::synth
