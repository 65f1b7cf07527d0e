#pragma once

// Tape-based reverse-mode differentiation over dense 64-bit tensors.
//
// A Tensor is either a constant (no graph) or a node recorded on a Graph.
// Operations on constants produce constants; operations touching at least one
// tracked tensor append a node to that tensor's Graph. The Graph must outlive
// every Tensor recorded on it.

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "abl/pixel.hpp"

namespace abl::ad {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string to_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Graph;

class Tensor {
public:
    Tensor();
    Tensor(Shape shape, std::vector<double> values);

    static Tensor scalar(double value);
    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return values_->size(); }
    const std::vector<double>& values() const { return *values_; }
    double operator[](std::size_t i) const { return (*values_)[i]; }
    /// Value of a single-element tensor.
    double item() const;

    bool tracked() const { return graph_ != nullptr; }
    Graph* graph() const { return graph_; }
    std::optional<std::size_t> node() const;

private:
    friend class Graph;

    Shape shape_;
    std::shared_ptr<const std::vector<double>> values_;
    Graph* graph_ = nullptr;
    std::size_t node_ = 0;
};

/// Gradient buffers handed to a node's backward rule, one per input. The span
/// is empty for inputs that are constants.
using InputGrads = std::vector<std::span<double>>;
using BackwardFn = std::function<void(std::span<const double> upstream, InputGrads& inputs)>;

class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    /// Leaf tensor whose gradient is collected by backward().
    Tensor variable(Shape shape, std::vector<double> values);
    Tensor variable(const Tensor& init);

    /// Appends a node. If none of the inputs is tracked on this graph the
    /// result is returned as a constant and nothing is recorded.
    Tensor record(const std::vector<Tensor>& inputs, Shape shape, std::vector<double> values,
                  BackwardFn backward);

    /// Reverse sweep from a single-element root, seeding its gradient with 1.
    void backward(const Tensor& root);

    /// Gradient accumulated for a tracked tensor by the last backward(); zeros
    /// when the tensor was unreachable from the root.
    std::vector<double> gradient(const Tensor& t) const;

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        std::vector<std::optional<std::size_t>> inputs;
        std::size_t size = 0;
        BackwardFn backward;
    };

    std::vector<Node> nodes_;
    std::vector<std::vector<double>> grads_;
};

/// Graph shared by the inputs, or nullptr if they are all constants. Throws if
/// tracked inputs live on different graphs.
Graph* common_graph(const std::vector<Tensor>& inputs);

// Elementwise arithmetic; shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);

inline constexpr double kLogFloor = 1e-12;

/// Natural log of max(a, 1e-12). Gradient is zero where the floor is active.
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor relu(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor sum_axis(const Tensor& a, std::size_t axis);
/// Inserts a new axis of length n at `axis`, repeating the input along it.
Tensor expand(const Tensor& a, std::size_t axis, std::size_t n);
Tensor reshape(const Tensor& a, Shape shape);
/// Stacks equally shaped tensors along a new leading axis.
Tensor stack(const std::vector<Tensor>& parts);
/// Slice `index` of the leading axis.
Tensor select(const Tensor& a, std::size_t index);

/// Per-pixel softmax over the channel axis of a C×H×W tensor. When `valid` is
/// given (one flag per element), channels flagged 0 are excluded: they output
/// 0 and receive no gradient. Every pixel needs at least one valid channel.
Tensor softmax_channel(const Tensor& logits, std::span<const unsigned char> valid = {});
/// Per-pixel log-softmax over channels; excluded channels output 0.
Tensor log_softmax_channel(const Tensor& logits, std::span<const unsigned char> valid = {});

/// Same values, detached from the graph.
Tensor stop_gradient(const Tensor& a);

/// Columns of a C×H×W tensor at the given pixels, as C×K.
Tensor gather_pixels(const Tensor& a, std::span<const Pixel> pixels);

/// Stride-1 cross-correlation with zero padding 1.
/// input Cin×H×W, kernel Cout×Cin×3×3, bias Cout -> Cout×H×W.
Tensor conv3x3(const Tensor& input, const Tensor& kernel, const Tensor& bias);

}  // namespace abl::ad
