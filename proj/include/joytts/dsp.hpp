#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "joytts/common.hpp"
#include "joytts/wav_io.hpp"

namespace joytts {

struct MelConfig {
  int sample_rate = 8000;
  int fft = 256;
  int hop = 64;
  int n_mels = 32;
  double fmin = 0.0;
  double fmax = 4000.0;
  double floor = 1e-5;
  int griffin_lim_iters = 32;

  int frame_count(size_t samples) const {
    if (samples < static_cast<size_t>(fft)) return 0;
    return 1 + static_cast<int>((samples - fft) / hop);
  }
  size_t sample_count(int frames) const {
    return frames <= 0 ? 0 : static_cast<size_t>(frames - 1) * hop + fft;
  }

  bool operator==(const MelConfig&) const = default;
};

// Log-mel frame matrix, row per frame, natural log with floor applied.
struct MelSpectrogram {
  int n_mels = 0;
  std::vector<float> data;  // frames * n_mels, row-major

  int frames() const { return n_mels == 0 ? 0 : static_cast<int>(data.size()) / n_mels; }
  float* row(int f) { return data.data() + static_cast<size_t>(f) * n_mels; }
  const float* row(int f) const { return data.data() + static_cast<size_t>(f) * n_mels; }
};

namespace dsp {

// Iterative radix-2 FFT, in place. n must be a power of two.
inline void fft(std::vector<std::complex<double>>& a, bool inverse) {
  const size_t n = a.size();
  require((n & (n - 1)) == 0 && n > 0, "fft: length must be a power of two");
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = 2.0 * M_PI / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t j = 0; j < len / 2; ++j) {
        std::complex<double> u = a[i + j];
        std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    for (auto& x : a) x /= static_cast<double>(n);
  }
}

inline std::vector<double> hann_window(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = 0.5 * (1.0 - std::cos(2.0 * M_PI * i / n));
  return w;
}

// Frames * (fft/2+1) complex spectra; frame f covers samples [f*hop, f*hop+fft).
inline std::vector<std::vector<std::complex<double>>> stft(const std::vector<float>& samples,
                                                           const MelConfig& cfg) {
  const int frames = cfg.frame_count(samples.size());
  const auto window = hann_window(cfg.fft);
  const int bins = cfg.fft / 2 + 1;
  std::vector<std::vector<std::complex<double>>> out(frames);
  std::vector<std::complex<double>> buf(cfg.fft);
  for (int f = 0; f < frames; ++f) {
    const size_t off = static_cast<size_t>(f) * cfg.hop;
    for (int i = 0; i < cfg.fft; ++i)
      buf[i] = std::complex<double>(samples[off + i] * window[i], 0.0);
    fft(buf, false);
    out[f].assign(buf.begin(), buf.begin() + bins);
  }
  return out;
}

// Weighted overlap-add inverse with the same Hann window; output length is
// (frames-1)*hop + fft.
inline std::vector<float> istft(const std::vector<std::vector<std::complex<double>>>& spec,
                                const MelConfig& cfg) {
  const int frames = static_cast<int>(spec.size());
  const size_t n = cfg.sample_count(frames);
  const auto window = hann_window(cfg.fft);
  std::vector<double> acc(n, 0.0), wsum(n, 0.0);
  std::vector<std::complex<double>> buf(cfg.fft);
  for (int f = 0; f < frames; ++f) {
    for (int k = 0; k < cfg.fft / 2 + 1; ++k) buf[k] = spec[f][k];
    for (int k = cfg.fft / 2 + 1; k < cfg.fft; ++k) buf[k] = std::conj(spec[f][cfg.fft - k]);
    fft(buf, true);
    const size_t off = static_cast<size_t>(f) * cfg.hop;
    for (int i = 0; i < cfg.fft; ++i) {
      acc[off + i] += buf[i].real() * window[i];
      wsum[off + i] += window[i] * window[i];
    }
  }
  std::vector<float> out(n);
  for (size_t i = 0; i < n; ++i)
    out[i] = static_cast<float>(acc[i] / (wsum[i] + 1e-12));
  return out;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular HTK-style filterbank: n_mels x (fft/2+1).
inline std::vector<std::vector<double>> mel_filterbank(const MelConfig& cfg) {
  const int bins = cfg.fft / 2 + 1;
  std::vector<double> mel_points(cfg.n_mels + 2);
  const double mel_lo = hz_to_mel(cfg.fmin), mel_hi = hz_to_mel(cfg.fmax);
  for (int i = 0; i < cfg.n_mels + 2; ++i)
    mel_points[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (cfg.n_mels + 1));
  std::vector<std::vector<double>> fb(cfg.n_mels, std::vector<double>(bins, 0.0));
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double lo = mel_points[m], mid = mel_points[m + 1], hi = mel_points[m + 2];
    for (int k = 0; k < bins; ++k) {
      const double hz = static_cast<double>(k) * cfg.sample_rate / cfg.fft;
      if (hz <= lo || hz >= hi) continue;
      fb[m][k] = hz <= mid ? (hz - lo) / (mid - lo) : (hi - hz) / (hi - mid);
    }
  }
  return fb;
}

}  // namespace dsp

// |STFT|^2 -> mel filterbank -> natural log with floor.
inline MelSpectrogram mel_from_wave(const Waveform& w, const MelConfig& cfg = {}) {
  require(w.samples.size() >= static_cast<size_t>(cfg.fft),
          "mel_from_wave: need at least " + std::to_string(cfg.fft) + " samples, got " +
              std::to_string(w.samples.size()));
  const auto spec = dsp::stft(w.samples, cfg);
  const auto fb = dsp::mel_filterbank(cfg);
  const int bins = cfg.fft / 2 + 1;
  MelSpectrogram mel;
  mel.n_mels = cfg.n_mels;
  mel.data.resize(spec.size() * cfg.n_mels);
  std::vector<double> power(bins);
  for (size_t f = 0; f < spec.size(); ++f) {
    for (int k = 0; k < bins; ++k) power[k] = std::norm(spec[f][k]);
    float* row = mel.row(static_cast<int>(f));
    for (int m = 0; m < cfg.n_mels; ++m) {
      double e = 0.0;
      for (int k = 0; k < bins; ++k) e += fb[m][k] * power[k];
      row[m] = static_cast<float>(std::log(std::max(e, cfg.floor)));
    }
  }
  return mel;
}

// Mel power -> linear power via the filterbank transpose with per-bin
// weight normalization, clipped non-negative.
inline std::vector<double> mel_to_linear_power(const float* mel_row, const MelConfig& cfg,
                                               const std::vector<std::vector<double>>& fb) {
  const int bins = cfg.fft / 2 + 1;
  std::vector<double> power(bins, 0.0);
  for (int k = 0; k < bins; ++k) {
    double num = 0.0, den = 0.0;
    for (int m = 0; m < cfg.n_mels; ++m) {
      num += fb[m][k] * std::exp(static_cast<double>(mel_row[m]));
      den += fb[m][k];
    }
    power[k] = den > 1e-12 ? std::max(num / den, 0.0) : 0.0;
  }
  return power;
}

// Griffin-Lim phase reconstruction: zero initial phase, fixed iteration
// count, peak-normalized to 0.9. Fully deterministic.
inline Waveform griffin_lim(const MelSpectrogram& mel, const MelConfig& cfg = {}) {
  Waveform out;
  out.sample_rate = cfg.sample_rate;
  const int frames = mel.frames();
  if (frames == 0) return out;
  require(mel.n_mels == cfg.n_mels, "griffin_lim: mel width mismatch");

  const auto fb = dsp::mel_filterbank(cfg);
  const int bins = cfg.fft / 2 + 1;
  std::vector<std::vector<double>> mag(frames, std::vector<double>(bins));
  for (int f = 0; f < frames; ++f) {
    const auto power = mel_to_linear_power(mel.row(f), cfg, fb);
    for (int k = 0; k < bins; ++k) mag[f][k] = std::sqrt(power[k]);
  }

  std::vector<std::vector<std::complex<double>>> spec(frames,
                                                      std::vector<std::complex<double>>(bins));
  for (int f = 0; f < frames; ++f)
    for (int k = 0; k < bins; ++k) spec[f][k] = std::complex<double>(mag[f][k], 0.0);

  std::vector<float> wave;
  for (int iter = 0; iter < cfg.griffin_lim_iters; ++iter) {
    wave = dsp::istft(spec, cfg);
    // Re-analyze with padding so the estimate keeps the frame count.
    auto est = dsp::stft(wave, cfg);
    for (int f = 0; f < frames; ++f) {
      for (int k = 0; k < bins; ++k) {
        const double a = std::abs(est[f][k]);
        spec[f][k] = a > 1e-12 ? est[f][k] / a * mag[f][k] : std::complex<double>(mag[f][k], 0.0);
      }
    }
  }
  wave = dsp::istft(spec, cfg);

  float peak = 0.0f;
  for (float s : wave) peak = std::max(peak, std::abs(s));
  if (peak > 0.0f) {
    const float scale = 0.9f / peak;
    for (float& s : wave) s *= scale;
  }
  out.samples = std::move(wave);
  return out;
}

}  // namespace joytts
