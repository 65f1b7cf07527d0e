#pragma once

#include <filesystem>
#include <iosfwd>

#include "run_config.hpp"

namespace abl::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kUsageError = 1;
inline constexpr int kNumericalFailure = 2;

/// out/scene_XXXX/{gt.pgm, features.bin, features.json, preview.ppm} for
/// num_scenes consecutive seeds.
int cmd_gen(const RunConfig& cfg, const std::filesystem::path& out, std::ostream& log);

/// One training run per scene (logit-field) or one run over all scenes
/// (tiny-conv). Writes log.csv, a checkpoint, pred.pgm and overlays.
int cmd_train(const RunConfig& cfg, const std::filesystem::path& out, std::ostream& log);

/// Metric CSV over matching label maps in pred_dir and gt_dir, written to
/// `out_csv` or to `log` when the path is empty.
int cmd_eval(const RunConfig& cfg, const std::filesystem::path& out_csv, std::ostream& log);

/// sqdist.pgm and dist.csv for the mask in `mask`.
int cmd_edt(const RunConfig& cfg, const std::filesystem::path& out, std::ostream& log);

int cmd_gradcheck(const RunConfig& cfg, std::ostream& log);

/// Full command line: parses flags and dispatches.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace abl::cli
