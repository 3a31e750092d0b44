#pragma once

#include "convhead/autodiff.hpp"
#include "convhead/types.hpp"

#include <utility>
#include <vector>

namespace convhead {

/// L_gen: sum over frames 2..T of the Euclidean norms of the beta and pose
/// residuals. Frame 1 carries the reference and is excluded.
double loss_gen(const CoeffSequence& pred, const CoeffSequence& gt);

/// L_mot: sum over frames 2..T of w1*||mu(beta) - mu(beta_hat)||_2 +
/// w2*||mu(pose) - mu(pose_hat)||_2 with mu the inter-frame difference.
double loss_mot(const CoeffSequence& pred, const CoeffSequence& gt, double w1, double w2);

/// L_total = L_gen + L_mot.
double loss_total(const CoeffSequence& pred, const CoeffSequence& gt, double w1, double w2);

/// Tape-level loss over predicted frames 2..T against the ground-truth track
/// (T x 70, row 0 = the shared reference frame).
struct LossIds {
  ad::Tape::Id gen;
  ad::Tape::Id mot;
  ad::Tape::Id total;
};
LossIds build_turn_loss(ad::Tape& tape,
                        const std::vector<std::pair<ad::Tape::Id, ad::Tape::Id>>& preds,
                        const Mat& gt_track, double w1, double w2);

}  // namespace convhead
