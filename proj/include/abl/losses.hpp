#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "abl/geometry.hpp"
#include "abl/tensor.hpp"

namespace abl::losses {

struct AblConfig {
    double theta = 20.0;                 // distance at which the weight saturates
    double smoothing_peak = 0.8;         // target mass on the chosen direction
    double smoothing_rest = 0.2 / 7.0;   // target mass on each other direction
    double boundary_ratio = 0.01;        // fraction of pixels admitted as predicted boundary
    bool detach = true;                  // neighbour distributions treated as constants

    void validate() const;
};

/// min(distance, theta) / theta.
double distance_weight(double distance, double theta);

/// Label-smoothed direction target. Directions whose bit is clear in `valid`
/// get 0 and the rest is renormalised to sum to 1.
std::array<double, 8> smoothed_target(int direction, std::uint8_t valid, const AblConfig& cfg);

/// Mean of -log softmax(logits)[gt] over non-ignore pixels.
ad::Tensor cross_entropy(const ad::Tensor& logits, const geometry::LabelMap& labels);

/// Direction logits KL(P_i || P_{i+d_k}) for k = 0..7, shaped 8×K×1 so the
/// channel softmax applies per pixel. Out-of-bounds directions are flagged 0
/// in `valid` and must be excluded from any softmax over the logits.
struct DirectionLogits {
    ad::Tensor logits;
    std::vector<unsigned char> valid;
};

DirectionLogits direction_logits(const ad::Tensor& probs, std::span<const Pixel> pixels, bool detach = true);

/// Softmax of direction_logits over the valid directions (8×K×1).
ad::Tensor direction_distribution(const ad::Tensor& probs, std::span<const Pixel> pixels, bool detach = true);

/// Pixels the boundary loss acts on, chosen from forward values only.
struct AblSelection {
    geometry::DirectionTarget targets;  // dilated PDB pixels with distance > 0
    std::size_t pdb_count = 0;          // undilated PDB size
    double mean_pdb_distance = 0.0;     // mean GTB distance over the undilated PDB
    bool has_gtb = false;
};

AblSelection select_abl_pixels(const ad::Tensor& probs, const geometry::LabelMap& labels, const AblConfig& cfg);

struct AblResult {
    ad::Tensor loss;
    AblSelection selection;
    std::size_t retained() const { return selection.targets.entries.size(); }
};

/// Active boundary loss. When `frozen` is given its pixel selection is reused
/// instead of being recomputed from the current logits.
AblResult abl(const ad::Tensor& logits, const geometry::LabelMap& labels, const AblConfig& cfg,
              const AblSelection* frozen = nullptr);

/// Lovász extension of the Jaccard loss for one class: errors and binary
/// ground-truth membership per pixel. The sort order is treated as constant.
ad::Tensor lovasz_extension(const ad::Tensor& errors, std::span<const std::uint8_t> foreground);

/// Mean over classes present in `labels` of the Lovász-extended Jaccard loss,
/// evaluated on class probabilities (C×H×W).
ad::Tensor lovasz_softmax_probs(const ad::Tensor& probs, const geometry::LabelMap& labels);
ad::Tensor lovasz_softmax(const ad::Tensor& logits, const geometry::LabelMap& labels);

struct FklConfig {
    bool flip_target = false;  // use (labels equal) instead of (labels differ) as BCE target
};

/// Binary cross-entropy of 1/(1+exp(KL)) over every forward edge that does not
/// touch an ignore pixel, averaged over edges.
ad::Tensor fkl(const ad::Tensor& logits, const geometry::LabelMap& labels, const FklConfig& cfg = {});

enum class BoundaryTerm { abl, fkl };

struct TermWeights {
    double ce = 1.0;
    double iou = 1.0;
    double boundary = 1.0;
    BoundaryTerm term = BoundaryTerm::abl;

    static TermWeights ade20k() { return {1.0, 1.0, 1.0, BoundaryTerm::abl}; }
    static TermWeights cityscapes() { return {1.0, 1.0, 1.5, BoundaryTerm::abl}; }
};

struct LossReport {
    ad::Tensor total;
    std::map<std::string, double> terms;  // unweighted values of active terms
    std::size_t n_b = 0;
    double mean_pdb_distance = 0.0;
};

/// w_ce·CE + w_iou·IoU + w_a·(ABL or FKL). Terms with zero weight are not
/// evaluated at all.
LossReport composite(const ad::Tensor& logits, const geometry::LabelMap& labels, const AblConfig& abl_cfg,
                     const TermWeights& weights, const FklConfig& fkl_cfg = {});

}  // namespace abl::losses
