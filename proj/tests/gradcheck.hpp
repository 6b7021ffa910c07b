// Analytic vs central-difference gradient comparison for the dynamics model,
// shared by the unit tests and the acceptance binary.
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "rollplan/trainer.hpp"

namespace rollplan::gradcheck {

/// Independent loss: mean |p - t| plus lambda times the mean absolute
/// difference of forward differences along x and along y.
inline double reference_loss(const std::vector<double>& p, const std::vector<double>& t, double lambda) {
  const int W = kImageSize, C = kChannels;
  auto at = [&](const std::vector<double>& v, int r, int c, int ch) { return v[(r * W + c) * C + ch]; };
  double l1 = 0;
  for (std::size_t i = 0; i < p.size(); ++i) l1 += std::abs(p[i] - t[i]);
  l1 /= static_cast<double>(p.size());
  double gx = 0, gy = 0;
  for (int r = 0; r < W; ++r) {
    for (int c = 0; c < W; ++c) {
      for (int ch = 0; ch < C; ++ch) {
        if (c + 1 < W) gx += std::abs((at(p, r, c + 1, ch) - at(p, r, c, ch)) - (at(t, r, c + 1, ch) - at(t, r, c, ch)));
        if (r + 1 < W) gy += std::abs((at(p, r + 1, c, ch) - at(p, r, c, ch)) - (at(t, r + 1, c, ch) - at(t, r, c, ch)));
      }
    }
  }
  const double pairs = static_cast<double>(W * (W - 1) * C);
  return l1 + lambda * (gx / pairs + gy / pairs);
}

inline std::vector<double> predict(const DynamicsConfig& cfg, const MixerParams<double>& p, const Image& in,
                                   const Action& a) {
  std::vector<double> src(in.px.begin(), in.px.end()), out(kNumPixels);
  const RowMat<double> patches = patchify<double, double>(cfg, std::span<const double>(src));
  const RowMat<double> pred = mixer_forward<double>(cfg, p, patches, normalise_action<double>(a.as_array()), nullptr);
  unpatchify<double, double>(cfg, pred, std::span<double>(out));
  return out;
}

struct TensorResult {
  std::string name;
  double relative_error = 0.0;
  double grad_norm = 0.0;
};

struct Result {
  std::vector<TensorResult> tensors;
  double worst() const {
    double w = 0;
    for (const auto& t : tensors) w = std::max(w, t.relative_error);
    return w;
  }
};

/// Random parameters, random frames and actions, targets above the
/// unperturbed prediction by at least 0.2 per value with every neighbour
/// difference at least 0.4, so a 1e-3 perturbation never crosses a kink of
/// the absolute values. One offset sign for every sample, otherwise the
/// bias gradients of a two-sample batch cancel. `samples` entries per tensor
/// are compared.
inline Result run(const DynamicsConfig& cfg, int batch = 2, int samples = 12, double h = 1e-3,
                  std::uint64_t seed = 11) {
  RngStream rng(seed);
  MixerParams<double> p = init_params<double>(cfg, seed);
  for (auto& t : p.tensors()) {
    for (auto& v : t.values) v += 0.05 * rng.normal();
  }

  std::vector<EpisodeTrace> eps(static_cast<std::size_t>(batch));
  std::vector<Window> windows;
  for (auto& ep : eps) {
    Image in;
    for (auto& v : in.px) v = static_cast<float>(rng.uniform());
    const Action a(0.16 * (rng.uniform() - 0.5), 0.16 * (rng.uniform() - 0.5), 2 * rng.uniform() - 1);
    const auto pred = predict(cfg, p, in, a);
    Image target;
    for (int r = 0; r < kImageSize; ++r) {
      for (int c = 0; c < kImageSize; ++c) {
        const double delta = 0.2 + 0.4 * ((r + 2 * c) % 3);
        for (int ch = 0; ch < kChannels; ++ch) {
          const int i = (r * kImageSize + c) * kChannels + ch;
          target.px[i] = static_cast<float>(pred[i] + delta);
        }
      }
    }
    ep.frames = {in, target};
    ep.actions = {a};
  }
  for (const auto& ep : eps) windows.push_back({&ep, 0, 1});

  const double lambda = 1.0;
  auto loss_at = [&](const MixerParams<double>& q) {
    double sum = 0;
    for (const auto& ep : eps) {
      const std::vector<double> t(ep.frames[1].px.begin(), ep.frames[1].px.end());
      sum += reference_loss(predict(cfg, q, ep.frames[0], ep.actions[0]), t, lambda);
    }
    return sum / static_cast<double>(eps.size());
  };

  MixerParams<double> g = MixerParams<double>::zeros(cfg);
  window_gradients<double>(cfg, p, windows, lambda, g);

  Result res;
  auto pt = p.tensors();
  const auto gt = g.tensors();
  for (std::size_t ti = 0; ti < pt.size(); ++ti) {
    double diff2 = 0, ga2 = 0, gf2 = 0;
    const std::size_t size = pt[ti].values.size();
    for (int k = 0; k < samples; ++k) {
      const std::size_t i = static_cast<std::size_t>(rng.next_u64() % size);
      const double orig = pt[ti].values[i];
      pt[ti].values[i] = orig + h;
      const double lp = loss_at(p);
      pt[ti].values[i] = orig - h;
      const double lm = loss_at(p);
      pt[ti].values[i] = orig;
      const double fd = (lp - lm) / (2 * h), ga = gt[ti].values[i];
      diff2 += (ga - fd) * (ga - fd);
      ga2 += ga * ga;
      gf2 += fd * fd;
    }
    const double denom = std::sqrt(std::max(ga2, gf2));
    res.tensors.push_back({pt[ti].name, denom == 0 ? 0.0 : std::sqrt(diff2) / denom, std::sqrt(ga2)});
  }
  return res;
}

}  // namespace rollplan::gradcheck
