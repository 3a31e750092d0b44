#include "convhead/losses.hpp"

namespace convhead {

namespace {

void check_pair(const CoeffSequence& pred, const CoeffSequence& gt) {
  if (pred.length() != gt.length()) {
    throw InputError("loss: length mismatch, pred " + std::to_string(pred.length()) +
                     " vs gt " + std::to_string(gt.length()));
  }
  if (pred.length() < 2) {
    throw InputError("loss: sequences must hold at least 2 frames");
  }
}

}  // namespace

double loss_gen(const CoeffSequence& pred, const CoeffSequence& gt) {
  check_pair(pred, gt);
  double acc = 0.0;
  for (int t = 1; t < pred.length(); ++t) {
    const auto& p = pred.frames[static_cast<std::size_t>(t)];
    const auto& g = gt.frames[static_cast<std::size_t>(t)];
    acc += (p.beta - g.beta).norm();
    Vec dp(kPoseDim);
    dp << (p.pose_angle - g.pose_angle), (p.pose_trans - g.pose_trans);
    acc += dp.norm();
  }
  return acc;
}

double loss_mot(const CoeffSequence& pred, const CoeffSequence& gt, double w1, double w2) {
  check_pair(pred, gt);
  double acc = 0.0;
  auto pose_of = [](const DynamicCoeffs& d) {
    Vec p(kPoseDim);
    p << d.pose_angle, d.pose_trans;
    return p;
  };
  for (int t = 1; t < pred.length(); ++t) {
    const auto& p = pred.frames[static_cast<std::size_t>(t)];
    const auto& p_prev = pred.frames[static_cast<std::size_t>(t - 1)];
    const auto& g = gt.frames[static_cast<std::size_t>(t)];
    const auto& g_prev = gt.frames[static_cast<std::size_t>(t - 1)];
    acc += w1 * ((p.beta - p_prev.beta) - (g.beta - g_prev.beta)).norm();
    acc += w2 * ((pose_of(p) - pose_of(p_prev)) - (pose_of(g) - pose_of(g_prev))).norm();
  }
  return acc;
}

double loss_total(const CoeffSequence& pred, const CoeffSequence& gt, double w1, double w2) {
  return loss_gen(pred, gt) + loss_mot(pred, gt, w1, w2);
}

LossIds build_turn_loss(ad::Tape& tape,
                        const std::vector<std::pair<ad::Tape::Id, ad::Tape::Id>>& preds,
                        const Mat& gt_track, double w1, double w2) {
  using Id = ad::Tape::Id;
  if (static_cast<Eigen::Index>(preds.size()) + 1 != gt_track.rows()) {
    throw InputError("build_turn_loss: got " + std::to_string(preds.size()) +
                     " predictions for a track of " + std::to_string(gt_track.rows()) +
                     " frames");
  }
  if (preds.empty()) {
    throw InputError("build_turn_loss: no predictions (turn shorter than 2 frames)");
  }
  const Eigen::Index nb = tape.val(preds[0].first).size();
  const Eigen::Index np = tape.val(preds[0].second).size();

  Id gen = tape.leaf(Vec::Zero(1));
  Id mot = tape.leaf(Vec::Zero(1));
  // frame 1 of the prediction is the reference, identical to gt row 0
  Id prev_beta = tape.leaf(gt_track.row(0).head(nb).transpose());
  Id prev_pose = tape.leaf(gt_track.row(0).tail(np).transpose());
  Vec gt_prev = gt_track.row(0).transpose();

  for (std::size_t i = 0; i < preds.size(); ++i) {
    const Vec gt_row = gt_track.row(static_cast<Eigen::Index>(i) + 1).transpose();
    const auto& [beta, pose] = preds[i];
    const Id beta_res = tape.sub(beta, tape.leaf(gt_row.head(nb)));
    const Id pose_res = tape.sub(pose, tape.leaf(gt_row.tail(np)));
    gen = tape.add(gen, tape.add(tape.l2norm(beta_res), tape.l2norm(pose_res)));

    const Vec gt_mu = gt_row - gt_prev;
    const Id mu_beta = tape.sub(tape.sub(beta, prev_beta), tape.leaf(gt_mu.head(nb)));
    const Id mu_pose = tape.sub(tape.sub(pose, prev_pose), tape.leaf(gt_mu.tail(np)));
    mot = tape.add(mot, tape.add(tape.scale(tape.l2norm(mu_beta), w1),
                                 tape.scale(tape.l2norm(mu_pose), w2)));

    prev_beta = beta;
    prev_pose = pose;
    gt_prev = gt_row;
  }
  return {gen, mot, tape.add(gen, mot)};
}

}  // namespace convhead
