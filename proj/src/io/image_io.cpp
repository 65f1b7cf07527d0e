#include "abl/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <string>

namespace abl::io {
namespace {

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    return is;
}

// Next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& is) {
    std::string tok;
    int ch;
    while ((ch = is.get()) != EOF) {
        if (ch == '#') {
            while ((ch = is.get()) != EOF && ch != '\n') {
            }
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(static_cast<char>(ch));
    }
    return tok;
}

struct Header {
    std::size_t width = 0, height = 0;
    unsigned maxval = 0;
};

Header read_header(std::istream& is, const std::string& magic, const std::filesystem::path& path) {
    if (header_token(is) != magic) throw FormatError(path.string() + ": expected " + magic + " file");
    Header h;
    try {
        h.width = std::stoul(header_token(is));
        h.height = std::stoul(header_token(is));
        h.maxval = static_cast<unsigned>(std::stoul(header_token(is)));
    } catch (const std::logic_error&) {
        throw FormatError(path.string() + ": malformed header");
    }
    if (h.maxval == 0 || h.maxval > 65535) throw FormatError(path.string() + ": bad maxval");
    return h;
}

}  // namespace

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
    auto os = open_out(path);
    os << "P5\n" << image.pixels.width() << ' ' << image.pixels.height() << '\n' << image.maxval << '\n';
    const bool wide = image.maxval > 255;
    for (auto v : image.pixels.data()) {
        if (wide) os.put(static_cast<char>(v >> 8));
        os.put(static_cast<char>(v & 0xff));
    }
    if (!os) throw std::runtime_error("failed writing " + path.string());
}

GrayImage read_pgm(const std::filesystem::path& path) {
    auto is = open_in(path);
    const auto h = read_header(is, "P5", path);
    GrayImage img{Grid<std::uint16_t>(h.height, h.width, 0), static_cast<std::uint16_t>(h.maxval)};
    const bool wide = h.maxval > 255;
    for (auto& v : img.pixels.data()) {
        int hi = is.get();
        int lo = wide ? is.get() : hi;
        if (lo == EOF || hi == EOF) throw FormatError(path.string() + ": truncated pixel data");
        v = wide ? static_cast<std::uint16_t>((hi << 8) | lo) : static_cast<std::uint16_t>(hi);
    }
    return img;
}

void write_ppm(const std::filesystem::path& path, const Grid<Rgb>& image) {
    auto os = open_out(path);
    os << "P6\n" << image.width() << ' ' << image.height() << "\n255\n";
    for (const auto& px : image.data()) os.write(reinterpret_cast<const char*>(px.data()), 3);
    if (!os) throw std::runtime_error("failed writing " + path.string());
}

Grid<Rgb> read_ppm(const std::filesystem::path& path) {
    auto is = open_in(path);
    const auto h = read_header(is, "P6", path);
    if (h.maxval > 255) throw FormatError(path.string() + ": only 8-bit PPM supported");
    Grid<Rgb> img(h.height, h.width, Rgb{0, 0, 0});
    for (auto& px : img.data()) {
        if (!is.read(reinterpret_cast<char*>(px.data()), 3)) {
            throw FormatError(path.string() + ": truncated pixel data");
        }
    }
    return img;
}

void save_labels(const std::filesystem::path& path, const geometry::LabelMap& labels) {
    GrayImage img{Grid<std::uint16_t>(labels.height(), labels.width(), 0), 255};
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        const auto v = labels.labels.data()[i];
        if (v < 0 || v > 255) throw std::invalid_argument("label " + std::to_string(v) + " does not fit 8 bits");
        img.pixels.data()[i] = static_cast<std::uint16_t>(v);
    }
    write_pgm(path, img);
}

geometry::LabelMap load_labels(const std::filesystem::path& path, std::int32_t ignore) {
    const auto img = read_pgm(path);
    geometry::LabelMap out(img.pixels.height(), img.pixels.width(), 0, ignore);
    std::transform(img.pixels.data().begin(), img.pixels.data().end(), out.labels.data().begin(),
                   [](std::uint16_t v) { return static_cast<std::int32_t>(v); });
    return out;
}

void save_mask(const std::filesystem::path& path, const geometry::BoundaryMap& mask) {
    GrayImage img{Grid<std::uint16_t>(mask.height(), mask.width(), 0), 255};
    for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels.data()[i] = mask.mask.data()[i] ? 255 : 0;
    write_pgm(path, img);
}

geometry::BoundaryMap load_mask(const std::filesystem::path& path) {
    const auto img = read_pgm(path);
    geometry::BoundaryMap out(img.pixels.height(), img.pixels.width());
    for (std::size_t i = 0; i < img.pixels.size(); ++i) out.mask.data()[i] = img.pixels.data()[i] ? 1 : 0;
    return out;
}

void save_sq_dist(const std::filesystem::path& path, const geometry::DistanceMap& distances) {
    GrayImage img{Grid<std::uint16_t>(distances.height(), distances.width(), 0), 65535};
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        img.pixels.data()[i] =
            static_cast<std::uint16_t>(std::min(distances.sq_dist.data()[i], kMaxStoredSqDist));
    }
    write_pgm(path, img);
}

Rgb class_colour(std::int32_t cls, std::int32_t ignore) {
    static constexpr std::array<Rgb, 8> kPalette{{{40, 40, 40},
                                                   {230, 159, 0},
                                                   {86, 180, 233},
                                                   {0, 158, 115},
                                                   {240, 228, 66},
                                                   {204, 121, 167},
                                                   {213, 94, 0},
                                                   {120, 120, 120}}};
    if (cls == ignore) return {255, 255, 255};
    return kPalette[static_cast<std::size_t>(cls < 0 ? 0 : cls) % kPalette.size()];
}

Grid<Rgb> boundary_overlay(const geometry::LabelMap& base, const geometry::BoundaryMap& gtb,
                           const geometry::BoundaryMap& pdb) {
    const auto H = base.labels.height(), W = base.labels.width();
    if (gtb.mask.height() != H || gtb.mask.width() != W || pdb.mask.height() != H || pdb.mask.width() != W) {
        throw std::invalid_argument("boundary_overlay: size mismatch");
    }
    Grid<Rgb> out(H, W, Rgb{0, 0, 0});
    for (std::size_t r = 0; r < H; ++r)
        for (std::size_t c = 0; c < W; ++c) {
            const bool g = gtb.mask(r, c) != 0, p = pdb.mask(r, c) != 0;
            if (g || p) {
                out(r, c) = {static_cast<std::uint8_t>(p ? 255 : 0), 0, static_cast<std::uint8_t>(g ? 255 : 0)};
                continue;
            }
            auto col = class_colour(base.labels(r, c), base.ignore);
            for (auto& ch : col) ch = static_cast<std::uint8_t>(ch / 2);
            out(r, c) = col;
        }
    return out;
}

}  // namespace abl::io
