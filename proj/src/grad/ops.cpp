#include <algorithm>
#include <cmath>
#include <limits>

#include "abl/tensor.hpp"

namespace abl::ad {
namespace {

Tensor make(const std::vector<Tensor>& inputs, Shape shape, std::vector<double> values,
            BackwardFn backward) {
    Graph* g = common_graph(inputs);
    if (!g) return Tensor(std::move(shape), std::move(values));
    return g->record(inputs, std::move(shape), std::move(values), std::move(backward));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
    }
}

void require_finite(const char* op, const Tensor& a) {
    for (double v : a.values()) {
        if (!std::isfinite(v)) throw NumericalError(std::string(op) + ": non-finite input");
    }
}

void require_rank3(const char* op, const Tensor& a) {
    if (a.rank() != 3) {
        throw ShapeError(std::string(op) + ": expected C×H×W, got " + to_string(a.shape()));
    }
}

template <class Fn>
Tensor unary(const Tensor& a, Fn&& fn, BackwardFn backward) {
    std::vector<double> out(a.size());
    const auto& x = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(x[i]);
    return make({a}, a.shape(), std::move(out), std::move(backward));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    return make({a, b}, a.shape(), std::move(out), [](std::span<const double> g, InputGrads& in) {
        for (auto& dst : in) {
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a, b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
    return make({a, b}, a.shape(), std::move(out), [](std::span<const double> g, InputGrads& in) {
        for (std::size_t i = 0; i < in[0].size(); ++i) in[0][i] += g[i];
        for (std::size_t i = 0; i < in[1].size(); ++i) in[1][i] -= g[i];
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    return make({a, b}, a.shape(), std::move(out), [a, b](std::span<const double> g, InputGrads& in) {
        for (std::size_t i = 0; i < in[0].size(); ++i) in[0][i] += g[i] * b[i];
        for (std::size_t i = 0; i < in[1].size(); ++i) in[1][i] += g[i] * a[i];
    });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double factor) {
    return unary(
        a, [factor](double x) { return factor * x; },
        [factor](std::span<const double> g, InputGrads& in) {
            for (std::size_t i = 0; i < in[0].size(); ++i) in[0][i] += factor * g[i];
        });
}

Tensor add_scalar(const Tensor& a, double offset) {
    return unary(
        a, [offset](double x) { return x + offset; },
        [](std::span<const double> g, InputGrads& in) {
            for (std::size_t i = 0; i < in[0].size(); ++i) in[0][i] += g[i];
        });
}

Tensor log(const Tensor& a) {
    require_finite("log", a);
    return unary(
        a, [](double x) { return std::log(std::max(x, kLogFloor)); },
        [a](std::span<const double> g, InputGrads& in) {
            for (std::size_t i = 0; i < in[0].size(); ++i) {
                if (a[i] >= kLogFloor) in[0][i] += g[i] / a[i];
            }
        });
}

Tensor exp(const Tensor& a) {
    require_finite("exp", a);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a[i]);
    Tensor y(a.shape(), out);
    return make({a}, a.shape(), std::move(out), [y](std::span<const double> g, InputGrads& in) {
        for (std::size_t i = 0; i < in[0].size(); ++i) in[0][i] += g[i] * y[i];
    });
}

Tensor relu(const Tensor& a) {
    return unary(
        a, [](double x) { return x > 0.0 ? x : 0.0; },
        [a](std::span<const double> g, InputGrads& in) {
            for (std::size_t i = 0; i < in[0].size(); ++i) {
                if (a[i] > 0.0) in[0][i] += g[i];
            }
        });
}

Tensor sum(const Tensor& a) {
    double total = 0.0;
    for (double v : a.values()) total += v;
    return make({a}, Shape{}, {total}, [](std::span<const double> g, InputGrads& in) {
        for (auto& v : in[0]) v += g[0];
    });
}

namespace {

// Decomposes a shape around `axis` into (outer, axis length, inner).
struct AxisSplit {
    std::size_t outer = 1, length = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.length = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

}  // namespace

Tensor sum_axis(const Tensor& a, std::size_t axis) {
    if (axis >= a.rank()) {
        throw ShapeError("sum_axis: axis " + std::to_string(axis) + " invalid for shape " +
                         to_string(a.shape()));
    }
    const auto s = split_at(a.shape(), axis);
    Shape out_shape = a.shape();
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
    std::vector<double> out(s.outer * s.inner, 0.0);
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t k = 0; k < s.length; ++k)
            for (std::size_t i = 0; i < s.inner; ++i)
                out[o * s.inner + i] += a[(o * s.length + k) * s.inner + i];
    return make({a}, std::move(out_shape), std::move(out), [s](std::span<const double> g, InputGrads& in) {
        if (in[0].empty()) return;
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t k = 0; k < s.length; ++k)
                for (std::size_t i = 0; i < s.inner; ++i)
                    in[0][(o * s.length + k) * s.inner + i] += g[o * s.inner + i];
    });
}

Tensor expand(const Tensor& a, std::size_t axis, std::size_t n) {
    if (axis > a.rank()) {
        throw ShapeError("expand: axis " + std::to_string(axis) + " invalid for shape " +
                         to_string(a.shape()));
    }
    Shape out_shape = a.shape();
    out_shape.insert(out_shape.begin() + static_cast<std::ptrdiff_t>(axis), n);
    const auto s = split_at(out_shape, axis);
    std::vector<double> out(element_count(out_shape));
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t k = 0; k < s.length; ++k)
            for (std::size_t i = 0; i < s.inner; ++i)
                out[(o * s.length + k) * s.inner + i] = a[o * s.inner + i];
    return make({a}, std::move(out_shape), std::move(out), [s](std::span<const double> g, InputGrads& in) {
        if (in[0].empty()) return;
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t k = 0; k < s.length; ++k)
                for (std::size_t i = 0; i < s.inner; ++i)
                    in[0][o * s.inner + i] += g[(o * s.length + k) * s.inner + i];
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (element_count(shape) != a.size()) {
        throw ShapeError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
    }
    return make({a}, std::move(shape), a.values(), [](std::span<const double> g, InputGrads& in) {
        for (std::size_t i = 0; i < in[0].size(); ++i) in[0][i] += g[i];
    });
}

Tensor stack(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("stack: no inputs");
    const auto& base = parts.front().shape();
    const std::size_t n = parts.front().size();
    std::vector<double> out;
    out.reserve(n * parts.size());
    for (const auto& p : parts) {
        if (p.shape() != base) {
            throw ShapeError("stack: shape mismatch " + to_string(base) + " vs " + to_string(p.shape()));
        }
        out.insert(out.end(), p.values().begin(), p.values().end());
    }
    Shape out_shape = base;
    out_shape.insert(out_shape.begin(), parts.size());
    return make(parts, std::move(out_shape), std::move(out), [n](std::span<const double> g, InputGrads& in) {
        for (std::size_t k = 0; k < in.size(); ++k) {
            for (std::size_t i = 0; i < in[k].size(); ++i) in[k][i] += g[k * n + i];
        }
    });
}

Tensor select(const Tensor& a, std::size_t index) {
    if (a.rank() == 0 || index >= a.shape()[0]) {
        throw ShapeError("select: index " + std::to_string(index) + " invalid for shape " +
                         to_string(a.shape()));
    }
    Shape out_shape(a.shape().begin() + 1, a.shape().end());
    const std::size_t n = element_count(out_shape);
    std::vector<double> out(a.values().begin() + static_cast<std::ptrdiff_t>(index * n),
                            a.values().begin() + static_cast<std::ptrdiff_t>((index + 1) * n));
    return make({a}, std::move(out_shape), std::move(out),
                [index, n](std::span<const double> g, InputGrads& in) {
                    if (in[0].empty()) return;
                    for (std::size_t i = 0; i < n; ++i) in[0][index * n + i] += g[i];
                });
}

namespace {

struct ChannelLayout {
    std::size_t channels = 0, pixels = 0;
};

ChannelLayout channel_layout(const char* op, const Tensor& logits, std::span<const unsigned char> valid) {
    require_rank3(op, logits);
    require_finite(op, logits);
    if (!valid.empty() && valid.size() != logits.size()) {
        throw ShapeError(std::string(op) + ": mask has " + std::to_string(valid.size()) +
                         " entries for shape " + to_string(logits.shape()));
    }
    return {logits.shape()[0], logits.shape()[1] * logits.shape()[2]};
}

// Softmax probabilities of every pixel; excluded channels get 0.
std::vector<double> channel_softmax(const Tensor& logits, std::span<const unsigned char> valid,
                                    const ChannelLayout& l, std::vector<double>* log_out) {
    std::vector<double> prob(logits.size(), 0.0);
    if (log_out) log_out->assign(logits.size(), 0.0);
    const auto ok = [&](std::size_t idx) { return valid.empty() || valid[idx] != 0; };
    for (std::size_t p = 0; p < l.pixels; ++p) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < l.channels; ++c) {
            const auto idx = c * l.pixels + p;
            if (ok(idx)) m = std::max(m, logits[idx]);
        }
        if (!std::isfinite(m)) throw ShapeError("softmax_channel: pixel with no valid channel");
        double s = 0.0;
        for (std::size_t c = 0; c < l.channels; ++c) {
            const auto idx = c * l.pixels + p;
            if (ok(idx)) s += std::exp(logits[idx] - m);
        }
        const double log_s = std::log(s);
        for (std::size_t c = 0; c < l.channels; ++c) {
            const auto idx = c * l.pixels + p;
            if (!ok(idx)) continue;
            prob[idx] = std::exp(logits[idx] - m) / s;
            if (log_out) (*log_out)[idx] = logits[idx] - m - log_s;
        }
    }
    return prob;
}

}  // namespace

Tensor softmax_channel(const Tensor& logits, std::span<const unsigned char> valid) {
    const auto l = channel_layout("softmax_channel", logits, valid);
    auto prob = channel_softmax(logits, valid, l, nullptr);
    Tensor y(logits.shape(), prob);
    return make({logits}, logits.shape(), std::move(prob), [y, l](std::span<const double> g, InputGrads& in) {
        if (in[0].empty()) return;
        for (std::size_t p = 0; p < l.pixels; ++p) {
            double dot = 0.0;
            for (std::size_t c = 0; c < l.channels; ++c) dot += y[c * l.pixels + p] * g[c * l.pixels + p];
            for (std::size_t c = 0; c < l.channels; ++c) {
                const auto idx = c * l.pixels + p;
                in[0][idx] += y[idx] * (g[idx] - dot);
            }
        }
    });
}

Tensor log_softmax_channel(const Tensor& logits, std::span<const unsigned char> valid) {
    const auto l = channel_layout("log_softmax_channel", logits, valid);
    std::vector<double> logp;
    auto prob = channel_softmax(logits, valid, l, &logp);
    Tensor y(logits.shape(), std::move(prob));
    std::vector<unsigned char> mask(valid.begin(), valid.end());
    return make({logits}, logits.shape(), std::move(logp),
                [y, l, mask](std::span<const double> g, InputGrads& in) {
                    if (in[0].empty()) return;
                    const auto ok = [&](std::size_t idx) { return mask.empty() || mask[idx] != 0; };
                    for (std::size_t p = 0; p < l.pixels; ++p) {
                        double total = 0.0;
                        for (std::size_t c = 0; c < l.channels; ++c) {
                            const auto idx = c * l.pixels + p;
                            if (ok(idx)) total += g[idx];
                        }
                        for (std::size_t c = 0; c < l.channels; ++c) {
                            const auto idx = c * l.pixels + p;
                            if (ok(idx)) in[0][idx] += g[idx] - y[idx] * total;
                        }
                    }
                });
}

Tensor stop_gradient(const Tensor& a) { return Tensor(a.shape(), a.values()); }

Tensor gather_pixels(const Tensor& a, std::span<const Pixel> pixels) {
    require_rank3("gather_pixels", a);
    const std::size_t C = a.shape()[0], H = a.shape()[1], W = a.shape()[2];
    const std::size_t K = pixels.size();
    std::vector<std::size_t> flat(K);
    for (std::size_t k = 0; k < K; ++k) {
        const auto& p = pixels[k];
        if (p.row < 0 || p.col < 0 || static_cast<std::size_t>(p.row) >= H ||
            static_cast<std::size_t>(p.col) >= W) {
            throw std::out_of_range("gather_pixels: pixel (" + std::to_string(p.row) + "," +
                                    std::to_string(p.col) + ") outside " + to_string(a.shape()));
        }
        flat[k] = static_cast<std::size_t>(p.row) * W + static_cast<std::size_t>(p.col);
    }
    std::vector<double> out(C * K);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t k = 0; k < K; ++k) out[c * K + k] = a[c * H * W + flat[k]];
    return make({a}, Shape{C, K}, std::move(out),
                [flat = std::move(flat), C, K, HW = H * W](std::span<const double> g, InputGrads& in) {
                    if (in[0].empty()) return;
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t k = 0; k < K; ++k) in[0][c * HW + flat[k]] += g[c * K + k];
                });
}

Tensor conv3x3(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
    require_rank3("conv3x3", input);
    const std::size_t Cin = input.shape()[0], H = input.shape()[1], W = input.shape()[2];
    if (kernel.rank() != 4 || kernel.shape()[1] != Cin || kernel.shape()[2] != 3 || kernel.shape()[3] != 3) {
        throw ShapeError("conv3x3: kernel " + to_string(kernel.shape()) + " incompatible with input " +
                         to_string(input.shape()));
    }
    const std::size_t Cout = kernel.shape()[0];
    if (bias.shape() != Shape{Cout}) {
        throw ShapeError("conv3x3: bias " + to_string(bias.shape()) + " for " + std::to_string(Cout) +
                         " output channels");
    }
    if (H < 3 || W < 3) throw ShapeError("conv3x3: spatial size below 3 in " + to_string(input.shape()));

    // Visits every (output, input, tap) triple that lands inside the image.
    auto for_each_tap = [=](auto&& fn) {
        for (std::size_t o = 0; o < Cout; ++o)
            for (std::size_t i = 0; i < Cin; ++i)
                for (int ky = 0; ky < 3; ++ky)
                    for (int kx = 0; kx < 3; ++kx) {
                        const std::size_t kidx = ((o * Cin + i) * 3 + ky) * 3 + kx;
                        for (std::size_t y = 0; y < H; ++y) {
                            const auto sy = static_cast<std::ptrdiff_t>(y) + ky - 1;
                            if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H)) continue;
                            for (std::size_t x = 0; x < W; ++x) {
                                const auto sx = static_cast<std::ptrdiff_t>(x) + kx - 1;
                                if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(W)) continue;
                                fn((o * H + y) * W + x, (i * H + static_cast<std::size_t>(sy)) * W +
                                                            static_cast<std::size_t>(sx), kidx);
                            }
                        }
                    }
    };

    std::vector<double> out(Cout * H * W);
    for (std::size_t o = 0; o < Cout; ++o) std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(o * H * W), H * W, bias[o]);
    for_each_tap([&](std::size_t oi, std::size_t ii, std::size_t ki) { out[oi] += kernel[ki] * input[ii]; });

    return make({input, kernel, bias}, Shape{Cout, H, W}, std::move(out),
                [input, kernel, for_each_tap, Cout, HW = H * W](std::span<const double> g, InputGrads& in) {
                    auto& gin = in[0];
                    auto& gk = in[1];
                    auto& gb = in[2];
                    if (!gin.empty() || !gk.empty()) {
                        for_each_tap([&](std::size_t oi, std::size_t ii, std::size_t ki) {
                            if (!gin.empty()) gin[ii] += kernel[ki] * g[oi];
                            if (!gk.empty()) gk[ki] += input[ii] * g[oi];
                        });
                    }
                    if (!gb.empty()) {
                        for (std::size_t o = 0; o < Cout; ++o)
                            for (std::size_t p = 0; p < HW; ++p) gb[o] += g[o * HW + p];
                    }
                });
}

}  // namespace abl::ad
