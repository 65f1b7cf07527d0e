#include "abl/tensor.hpp"

#include <numeric>
#include <sstream>

namespace abl::ad {

std::size_t element_count(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor() : Tensor(Shape{}, std::vector<double>{0.0}) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)),
      values_(std::make_shared<const std::vector<double>>(std::move(values))) {
    if (values_->size() != element_count(shape_)) {
        throw ShapeError("tensor of shape " + to_string(shape_) + " given " +
                         std::to_string(values_->size()) + " values");
    }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
    const auto n = element_count(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value));
}

double Tensor::item() const {
    if (size() != 1) {
        throw ShapeError("item() on tensor of shape " + to_string(shape_));
    }
    return (*values_)[0];
}

std::optional<std::size_t> Tensor::node() const {
    if (!graph_) return std::nullopt;
    return node_;
}

Tensor Graph::variable(Shape shape, std::vector<double> values) {
    Tensor t(std::move(shape), std::move(values));
    Node node;
    node.size = t.size();
    nodes_.push_back(std::move(node));
    t.graph_ = this;
    t.node_ = nodes_.size() - 1;
    return t;
}

Tensor Graph::variable(const Tensor& init) {
    return variable(init.shape(), init.values());
}

Tensor Graph::record(const std::vector<Tensor>& inputs, Shape shape, std::vector<double> values,
                     BackwardFn backward) {
    Tensor out(std::move(shape), std::move(values));
    Node node;
    node.size = out.size();
    bool any = false;
    for (const auto& in : inputs) {
        if (in.graph_ == this) {
            node.inputs.emplace_back(in.node_);
            any = true;
        } else if (in.graph_ == nullptr) {
            node.inputs.emplace_back(std::nullopt);
        } else {
            throw std::logic_error("tensor recorded on a different graph");
        }
    }
    if (!any) return out;
    node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    out.graph_ = this;
    out.node_ = nodes_.size() - 1;
    return out;
}

void Graph::backward(const Tensor& root) {
    if (root.graph_ != this) {
        throw std::logic_error("backward() root is not recorded on this graph");
    }
    if (root.size() != 1) {
        throw ShapeError("backward() needs a single-element root, got " + to_string(root.shape()));
    }
    grads_.assign(nodes_.size(), {});
    grads_[root.node_].assign(1, 1.0);

    for (std::size_t id = root.node_ + 1; id-- > 0;) {
        Node& node = nodes_[id];
        if (grads_[id].empty() || !node.backward) continue;
        InputGrads buffers;
        buffers.reserve(node.inputs.size());
        for (const auto& in : node.inputs) {
            if (!in) {
                buffers.emplace_back();
                continue;
            }
            auto& g = grads_[*in];
            if (g.empty()) g.assign(nodes_[*in].size, 0.0);
            buffers.emplace_back(g);
        }
        node.backward(grads_[id], buffers);
    }
}

std::vector<double> Graph::gradient(const Tensor& t) const {
    if (t.graph_ != this) return std::vector<double>(t.size(), 0.0);
    if (t.node_ < grads_.size() && !grads_[t.node_].empty()) return grads_[t.node_];
    return std::vector<double>(t.size(), 0.0);
}

Graph* common_graph(const std::vector<Tensor>& inputs) {
    Graph* g = nullptr;
    for (const auto& t : inputs) {
        if (!t.tracked()) continue;
        if (g && g != t.graph()) throw std::logic_error("inputs recorded on different graphs");
        g = t.graph();
    }
    return g;
}

}  // namespace abl::ad
