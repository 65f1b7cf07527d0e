#pragma once

// Central finite-difference checks of backward() against forward evaluation.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "abl/geometry.hpp"
#include "abl/tensor.hpp"

namespace abl::gradcheck {

/// Scalar function of one tensor. Must work both on a tracked input (for the
/// analytic gradient) and on a constant one (for differencing).
using ScalarFn = std::function<ad::Tensor(const ad::Tensor&)>;

struct Comparison {
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    std::size_t elements = 0;
};

/// Element-wise comparison of backward() against central differences with
/// step h. The relative error of an element is |num - ana| divided by
/// max(|num|, |ana|, floor), so vanishing gradients are compared absolutely.
Comparison compare(const ScalarFn& fn, const ad::Tensor& at, double h = 1e-5, double floor = 1e-6);

struct Instance {
    ad::Tensor logits;
    geometry::LabelMap labels;
};

/// Random logits in [-2,2] over a label map of axis-aligned blocks.
Instance random_instance(std::size_t classes, std::size_t height, std::size_t width, std::uint64_t seed);

struct LossCheck {
    std::string loss;
    double max_rel_err = 0.0;
    std::size_t instances = 0;
    bool passed = false;
};

/// CE, lovász-softmax, FKL and ABL on `instances` random 8×8 instances per
/// loss, alternating 2 and 4 classes. ABL's pixel selection is frozen at the
/// base point and neighbours are not detached.
std::vector<LossCheck> loss_suite(std::uint64_t seed, int instances = 20, double tol = 1e-4);

}  // namespace abl::gradcheck
