#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace convhead {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// All library failures derive from Error so callers (and the CLI) can map
// them onto exit codes uniformly.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InputError : Error {
  using Error::Error;
};
struct FormatError : Error {
  using Error::Error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct NumericError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};

inline constexpr int kAudioDim = 45;
inline constexpr int kBetaDim = 64;
inline constexpr int kPoseAngleDim = 3;
inline constexpr int kPoseTransDim = 3;
inline constexpr int kPoseDim = kPoseAngleDim + kPoseTransDim;
inline constexpr int kMotionDim = kBetaDim + kPoseDim;  // 70

/// Identity-dependent coefficients (alpha, delta, gamma). Carried through the
/// data model but never predicted.
struct IdentityCoeffs {
  Vec alpha;  // 80, identity shape
  Vec delta;  // 80, texture
  Vec gamma;  // 27, lighting
};

/// Per-frame dynamic coefficients m = (beta, pose).
struct DynamicCoeffs {
  Vec beta;        // 64, expression
  Vec pose_angle;  // 3, radians
  Vec pose_trans;  // 3, model units

  static DynamicCoeffs zero();
  static DynamicCoeffs from_flat(const Vec& v);
  /// Flattened layout: beta | pose_angle | pose_trans (70 dims).
  Vec flat() const;
};

/// Wraps each pose angle into [-pi, pi].
Vec canonicalize_angles(const Vec& angles);

struct CoeffSequence {
  std::vector<DynamicCoeffs> frames;
  double fps = 30.0;

  int length() const { return static_cast<int>(frames.size()); }
  Mat to_matrix() const;  // T x 70
  static CoeffSequence from_matrix(const Mat& m, double fps = 30.0);
};

/// Layout of the full reconstruction vector, order (alpha, beta, delta, pose,
/// gamma). Dimensions follow the usual 3DMM convention but can be overridden
/// through the manifest.
struct CoeffLayout {
  int identity = 80;
  int expression = 64;
  int texture = 80;
  int pose = 6;
  int lighting = 27;

  int total() const { return identity + expression + texture + pose + lighting; }
};

std::pair<IdentityCoeffs, DynamicCoeffs> split_coeffs(const Vec& full,
                                                      const CoeffLayout& layout = {});
Vec concat_coeffs(const IdentityCoeffs& id, const DynamicCoeffs& dyn,
                  const CoeffLayout& layout = {});

/// Deterministic 64-bit stream split. Used wherever per-item rng streams are
/// derived from one corpus seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace convhead
