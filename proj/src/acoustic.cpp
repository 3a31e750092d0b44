#include "convhead/acoustic.hpp"

#include "convhead/fft.hpp"

#include <cmath>

namespace convhead {

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular filterbank over FFT bin center frequencies. Filter i spans mel
// points [i, i+2] with its peak at point i+1; heights are 1 (no area
// normalization).
Mat mel_filterbank(int n_filters, std::size_t n_fft, int sample_rate) {
  const int n_bins = static_cast<int>(n_fft / 2 + 1);
  const double mel_max = hz_to_mel(sample_rate / 2.0);
  std::vector<double> points(static_cast<std::size_t>(n_filters) + 2);
  for (std::size_t i = 0; i < points.size(); ++i) {
    points[i] = mel_to_hz(mel_max * static_cast<double>(i) / (n_filters + 1));
  }
  Mat fb = Mat::Zero(n_filters, n_bins);
  for (int f = 0; f < n_filters; ++f) {
    const double lo = points[static_cast<std::size_t>(f)];
    const double mid = points[static_cast<std::size_t>(f) + 1];
    const double hi = points[static_cast<std::size_t>(f) + 2];
    for (int k = 0; k < n_bins; ++k) {
      const double freq = static_cast<double>(k) * sample_rate / static_cast<double>(n_fft);
      if (freq > lo && freq < mid) {
        fb(f, k) = (freq - lo) / (mid - lo);
      } else if (freq >= mid && freq < hi) {
        fb(f, k) = (hi - freq) / (hi - mid);
      }
    }
  }
  return fb;
}

}  // namespace

Vec AcousticFrameFeatures::flat() const {
  Vec v(kAudioDim);
  v.head(kNumMfcc) = mfcc;
  v.segment(kNumMfcc, kNumMfcc) = mfcc_delta;
  v.segment(2 * kNumMfcc, kNumMfcc) = mfcc_delta_delta;
  v[42] = energy;
  v[43] = loudness;
  v[44] = zcr;
  return v;
}

std::vector<std::vector<double>> frame_audio(const AudioClip& clip, double fps) {
  if (clip.samples.empty()) {
    throw InputError("frame_audio: empty clip");
  }
  if (clip.sample_rate <= 0 || fps <= 0.0) {
    throw InputError("frame_audio: sample_rate and fps must be positive");
  }
  const long hop = std::lround(static_cast<double>(clip.sample_rate) / fps);
  if (hop <= 0) {
    throw InputError("frame_audio: fps too high for this sample rate");
  }
  const long n = static_cast<long>(clip.samples.size());
  const long frames = n / hop;
  if (frames == 0) {
    throw InputError("frame_audio: clip shorter than one hop (" + std::to_string(n) +
                     " samples, hop " + std::to_string(hop) + ")");
  }
  std::vector<std::vector<double>> windows;
  windows.reserve(static_cast<std::size_t>(frames));
  const long win = 2 * hop;
  for (long t = 0; t < frames; ++t) {
    // hop t covers [t*hop, (t+1)*hop); the window is centered on it
    const long start = t * hop - hop / 2;
    std::vector<double> w(static_cast<std::size_t>(win), 0.0);
    for (long i = 0; i < win; ++i) {
      const long src = start + i;
      if (src >= 0 && src < n) {
        w[static_cast<std::size_t>(i)] = clip.samples[static_cast<std::size_t>(src)];
      }
    }
    windows.push_back(std::move(w));
  }
  return windows;
}

Vec mfcc(const std::vector<double>& window, int sample_rate) {
  if (window.empty()) {
    throw InputError("mfcc: empty window");
  }
  const std::size_t n_fft = next_pow2(window.size());
  RealFft fft(n_fft);
  const auto bins = fft.forward(window);

  const Mat fb = mel_filterbank(kNumMelFilters, n_fft, sample_rate);
  Vec power(static_cast<Eigen::Index>(bins.size()));
  for (std::size_t k = 0; k < bins.size(); ++k) {
    power[static_cast<Eigen::Index>(k)] = std::norm(bins[k]);
  }
  Vec mel = fb * power;
  Vec log_mel(kNumMelFilters);
  for (int i = 0; i < kNumMelFilters; ++i) {
    log_mel[i] = std::log(std::max(mel[i], kLogFloor));
  }

  // orthonormal DCT-II, coefficients 1..14
  Vec out(kNumMfcc);
  const double scale = std::sqrt(2.0 / kNumMelFilters);
  for (int j = 1; j <= kNumMfcc; ++j) {
    double acc = 0.0;
    for (int n = 0; n < kNumMelFilters; ++n) {
      acc += log_mel[n] * std::cos(M_PI * j * (n + 0.5) / kNumMelFilters);
    }
    out[j - 1] = scale * acc;
  }
  return out;
}

Mat delta_features(const Mat& mfcc_seq) {
  const Eigen::Index t_len = mfcc_seq.rows();
  if (t_len < 1) {
    throw InputError("delta_features: empty sequence");
  }
  const Eigen::Index dim = mfcc_seq.cols();
  auto clamp_row = [&](Eigen::Index t) { return std::clamp<Eigen::Index>(t, 0, t_len - 1); };
  auto regression = [&](const Mat& src) {
    Mat d(t_len, dim);
    // d_t = sum_{n=1..2} n*(c_{t+n} - c_{t-n}) / (2 * sum n^2), edges replicated
    for (Eigen::Index t = 0; t < t_len; ++t) {
      d.row(t) = (1.0 * (src.row(clamp_row(t + 1)) - src.row(clamp_row(t - 1))) +
                  2.0 * (src.row(clamp_row(t + 2)) - src.row(clamp_row(t - 2)))) /
                 10.0;
    }
    return d;
  };
  const Mat delta = regression(mfcc_seq);
  const Mat delta2 = regression(delta);
  Mat out(t_len, 2 * dim);
  out.leftCols(dim) = delta;
  out.rightCols(dim) = delta2;
  return out;
}

ScalarFeatures scalar_features(const std::vector<double>& window) {
  if (window.empty()) {
    throw InputError("scalar_features: empty window");
  }
  double energy = 0.0;
  for (double s : window) {
    energy += s * s;
  }
  energy /= static_cast<double>(window.size());

  std::size_t sign_changes = 0;
  for (std::size_t i = 1; i < window.size(); ++i) {
    const bool prev_nonneg = window[i - 1] >= 0.0;  // 0 counts as positive
    const bool cur_nonneg = window[i] >= 0.0;
    if (prev_nonneg != cur_nonneg) {
      ++sign_changes;
    }
  }
  const double zcr = window.size() > 1
                         ? static_cast<double>(sign_changes) /
                               static_cast<double>(window.size() - 1)
                         : 0.0;
  return {energy, std::log(energy + kEnergyFloor), zcr};
}

std::vector<AcousticFrameFeatures> extract_features(const AudioClip& clip, double fps) {
  const auto windows = frame_audio(clip, fps);
  const Eigen::Index t_len = static_cast<Eigen::Index>(windows.size());

  Mat mfccs(t_len, kNumMfcc);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    mfccs.row(t) = mfcc(windows[static_cast<std::size_t>(t)], clip.sample_rate).transpose();
  }
  const Mat deltas = delta_features(mfccs);

  std::vector<AcousticFrameFeatures> out(static_cast<std::size_t>(t_len));
  for (Eigen::Index t = 0; t < t_len; ++t) {
    auto& f = out[static_cast<std::size_t>(t)];
    f.mfcc = mfccs.row(t).transpose();
    f.mfcc_delta = deltas.row(t).head(kNumMfcc).transpose();
    f.mfcc_delta_delta = deltas.row(t).tail(kNumMfcc).transpose();
    const auto s = scalar_features(windows[static_cast<std::size_t>(t)]);
    f.energy = s.energy;
    f.loudness = s.loudness;
    f.zcr = s.zcr;
  }
  return out;
}

Mat extract_feature_matrix(const AudioClip& clip, double fps) {
  const auto frames = extract_features(clip, fps);
  Mat m(static_cast<Eigen::Index>(frames.size()), kAudioDim);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    m.row(static_cast<Eigen::Index>(t)) = frames[t].flat().transpose();
  }
  return m;
}

}  // namespace convhead
