#pragma once

#include "convhead/types.hpp"

#include <string>
#include <vector>

namespace convhead {

struct FdMetrics {
  double exp_fd = 0.0;
  double angle_fd = 0.0;
  double trans_fd = 0.0;
};

/// Per-component L1 feature distance, averaged over frames: mean_t of
/// ||beta_t - beta_hat_t||_1 (and likewise over the 3 pose angles and the 3
/// translations).
FdMetrics fd_metrics(const CoeffSequence& pred, const CoeffSequence& gt);

/// Reference frame plus i.i.d. Gaussian perturbations per dimension; frame 1
/// stays unperturbed. Deterministic for a fixed seed.
CoeffSequence baseline_random(const DynamicCoeffs& reference, int length, double sigma,
                              std::uint64_t seed, double fps = 30.0);

/// Copies the speaker's motion verbatim.
CoeffSequence baseline_mirror(const CoeffSequence& speaker);

struct EvalOptions {
  double sigma = 0.05;
  std::uint64_t seed = 0;
  char agent = 'P';
  std::string dataset;
};

struct ClipScore {
  std::string manifest;
  int turn_index = 0;
  int role = 0;
  int frames = 0;
  FdMetrics fd;
};

struct EvalReport {
  std::string method;
  std::string dataset;
  int clip_count = 0;
  FdMetrics mean;
  std::vector<ClipScore> clips;
};

/// Generates per-clip predictions with the chosen method and scores them
/// against ground truth. `method` is "random", "mirror", "oracle" (ground
/// truth fed back, a sanity floor) or "ckpt:<path>".
EvalReport evaluate_run(const std::vector<std::string>& manifest_paths,
                        const std::string& method, const EvalOptions& options = {});

std::string report_to_json(const EvalReport& report);
void save_report(const std::string& path, const EvalReport& report);

}  // namespace convhead
