#pragma once

#include "convhead/types.hpp"
#include "convhead/wav.hpp"

#include <vector>

namespace convhead {

// Fixed MFCC parameterization: FFT size = next pow2 >= window length, 26
// triangular mel filters over [0, sr/2], log floor 1e-10, orthonormal DCT-II,
// coefficients 1..14 kept (the 0th duplicates energy and is dropped).
inline constexpr int kNumMelFilters = 26;
inline constexpr int kNumMfcc = 14;
inline constexpr double kLogFloor = 1e-10;
inline constexpr double kEnergyFloor = 1e-10;

/// One 45-dim frame: mfcc | delta | delta-delta | energy | loudness | zcr.
struct AcousticFrameFeatures {
  Vec mfcc;              // 14
  Vec mfcc_delta;        // 14
  Vec mfcc_delta_delta;  // 14
  double energy = 0.0;   // mean square
  double loudness = 0.0; // ln(energy + 1e-10)
  double zcr = 0.0;      // in [0, 1]

  Vec flat() const;
};

/// Splits a clip into one window per video frame: hop = round(sr/fps),
/// window = 2*hop centered on the hop, zero-padded at the boundaries.
/// Window count = floor(samples / hop).
std::vector<std::vector<double>> frame_audio(const AudioClip& clip, double fps);

/// 14 MFCCs of one window. Deterministic; silence maps to the log floor.
Vec mfcc(const std::vector<double>& window, int sample_rate);

/// Delta and delta-delta over an MFCC sequence via the standard width-2
/// regression window with edge replication. Output rows are 28-dim
/// (delta | delta-delta).
Mat delta_features(const Mat& mfcc_seq);

struct ScalarFeatures {
  double energy;
  double loudness;
  double zcr;
};
ScalarFeatures scalar_features(const std::vector<double>& window);

std::vector<AcousticFrameFeatures> extract_features(const AudioClip& clip, double fps);

/// Same pipeline, flattened to a T x 45 matrix (the VCAF payload).
Mat extract_feature_matrix(const AudioClip& clip, double fps);

}  // namespace convhead
