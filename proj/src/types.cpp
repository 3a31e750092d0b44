#include "convhead/types.hpp"

#include <cmath>

namespace convhead {

DynamicCoeffs DynamicCoeffs::zero() {
  DynamicCoeffs d;
  d.beta = Vec::Zero(kBetaDim);
  d.pose_angle = Vec::Zero(kPoseAngleDim);
  d.pose_trans = Vec::Zero(kPoseTransDim);
  return d;
}

DynamicCoeffs DynamicCoeffs::from_flat(const Vec& v) {
  if (v.size() != kMotionDim) {
    throw ShapeError("dynamic coeffs: expected " + std::to_string(kMotionDim) +
                     " values, got " + std::to_string(v.size()));
  }
  DynamicCoeffs d;
  d.beta = v.head(kBetaDim);
  d.pose_angle = v.segment(kBetaDim, kPoseAngleDim);
  d.pose_trans = v.tail(kPoseTransDim);
  return d;
}

Vec DynamicCoeffs::flat() const {
  Vec v(kMotionDim);
  v.head(kBetaDim) = beta;
  v.segment(kBetaDim, kPoseAngleDim) = pose_angle;
  v.tail(kPoseTransDim) = pose_trans;
  return v;
}

Vec canonicalize_angles(const Vec& angles) {
  Vec out(angles.size());
  for (Eigen::Index i = 0; i < angles.size(); ++i) {
    double a = std::remainder(angles[i], 2.0 * M_PI);
    out[i] = a;
  }
  return out;
}

Mat CoeffSequence::to_matrix() const {
  Mat m(static_cast<Eigen::Index>(frames.size()), kMotionDim);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    m.row(static_cast<Eigen::Index>(t)) = frames[t].flat().transpose();
  }
  return m;
}

CoeffSequence CoeffSequence::from_matrix(const Mat& m, double fps) {
  if (m.cols() != kMotionDim) {
    throw ShapeError("coeff sequence: expected " + std::to_string(kMotionDim) +
                     " columns, got " + std::to_string(m.cols()));
  }
  CoeffSequence seq;
  seq.fps = fps;
  seq.frames.reserve(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index t = 0; t < m.rows(); ++t) {
    seq.frames.push_back(DynamicCoeffs::from_flat(m.row(t).transpose()));
  }
  return seq;
}

std::pair<IdentityCoeffs, DynamicCoeffs> split_coeffs(const Vec& full,
                                                      const CoeffLayout& layout) {
  if (full.size() != layout.total()) {
    throw ShapeError("split_coeffs: expected " + std::to_string(layout.total()) +
                     " values, got " + std::to_string(full.size()));
  }
  IdentityCoeffs id;
  DynamicCoeffs dyn;
  Eigen::Index off = 0;
  id.alpha = full.segment(off, layout.identity);
  off += layout.identity;
  dyn.beta = full.segment(off, layout.expression);
  off += layout.expression;
  id.delta = full.segment(off, layout.texture);
  off += layout.texture;
  const int angle = layout.pose / 2;
  dyn.pose_angle = full.segment(off, angle);
  dyn.pose_trans = full.segment(off + angle, layout.pose - angle);
  off += layout.pose;
  id.gamma = full.segment(off, layout.lighting);
  return {id, dyn};
}

Vec concat_coeffs(const IdentityCoeffs& id, const DynamicCoeffs& dyn,
                  const CoeffLayout& layout) {
  Vec full(layout.total());
  Eigen::Index off = 0;
  full.segment(off, layout.identity) = id.alpha;
  off += layout.identity;
  full.segment(off, layout.expression) = dyn.beta;
  off += layout.expression;
  full.segment(off, layout.texture) = id.delta;
  off += layout.texture;
  full.segment(off, dyn.pose_angle.size()) = dyn.pose_angle;
  full.segment(off + dyn.pose_angle.size(), dyn.pose_trans.size()) = dyn.pose_trans;
  off += layout.pose;
  full.segment(off, layout.lighting) = id.gamma;
  return full;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 finalizer over the combined state
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace convhead
