#pragma once

// Patch token-mixing encoder/decoder with explicit forward cache and
// hand-derived backward pass. Templated on the scalar so the same code runs
// in float for training and in double for gradient checking.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rollplan/rng.hpp"

namespace rollplan {

struct DynamicsConfig {
  int patch_size = 4;
  int token_dim = 64;
  int num_mix_blocks = 2;
  int channel_hidden = 128;
  int action_embed_dim = 64;
  bool residual_output = true;

  int image_size = 32;  // fixed by the observation format, not serialised

  int patches_per_side() const { return image_size / patch_size; }
  int num_patches() const { return patches_per_side() * patches_per_side(); }
  int num_tokens() const { return num_patches() + 1; }
  int patch_values() const { return patch_size * patch_size * 3; }

  void validate() const {
    if (patch_size <= 0 || image_size % patch_size != 0) {
      throw std::invalid_argument("patch_size must divide the image size");
    }
    if (token_dim <= 0 || channel_hidden <= 0 || num_mix_blocks < 0) {
      throw std::invalid_argument("dynamics dimensions must be positive");
    }
    if (action_embed_dim != token_dim) {
      throw std::invalid_argument("action_embed_dim must equal token_dim (the action is a token)");
    }
  }

  friend bool operator==(const DynamicsConfig&, const DynamicsConfig&) = default;
};

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
struct TensorView {
  std::string name;
  std::vector<int> dims;
  std::span<T> values;
};

template <typename T>
struct MixerParams {
  struct Block {
    RowMat<T> token_mix, token_bias;  // [N,N], [N,1]
    RowMat<T> fc1, fc1_bias;          // [D,H], [1,H]
    RowMat<T> fc2, fc2_bias;          // [H,D], [1,D]
  };

  RowMat<T> patch_embed, patch_bias;    // [P,D], [1,D]
  RowMat<T> action_embed, action_bias;  // [3,D], [1,D]
  std::vector<Block> blocks;
  RowMat<T> decode, decode_bias;  // [D,P], [1,P]

  static MixerParams zeros(const DynamicsConfig& cfg) {
    const int P = cfg.patch_values(), D = cfg.token_dim, H = cfg.channel_hidden, N = cfg.num_tokens();
    MixerParams p;
    p.patch_embed = RowMat<T>::Zero(P, D);
    p.patch_bias = RowMat<T>::Zero(1, D);
    p.action_embed = RowMat<T>::Zero(3, D);
    p.action_bias = RowMat<T>::Zero(1, D);
    p.blocks.resize(cfg.num_mix_blocks);
    for (auto& b : p.blocks) {
      b.token_mix = RowMat<T>::Zero(N, N);
      b.token_bias = RowMat<T>::Zero(N, 1);
      b.fc1 = RowMat<T>::Zero(D, H);
      b.fc1_bias = RowMat<T>::Zero(1, H);
      b.fc2 = RowMat<T>::Zero(H, D);
      b.fc2_bias = RowMat<T>::Zero(1, D);
    }
    p.decode = RowMat<T>::Zero(D, P);
    p.decode_bias = RowMat<T>::Zero(1, P);
    return p;
  }

  /// Canonical tensor order used by serialisation and the optimizer.
  std::vector<TensorView<T>> tensors() {
    std::vector<TensorView<T>> out;
    auto add = [&](std::string name, RowMat<T>& m, bool vector) {
      std::vector<int> dims;
      if (vector) {
        dims = {static_cast<int>(m.size())};
      } else {
        dims = {static_cast<int>(m.rows()), static_cast<int>(m.cols())};
      }
      out.push_back({std::move(name), std::move(dims), std::span<T>(m.data(), m.size())});
    };
    add("patch_embed.weight", patch_embed, false);
    add("patch_embed.bias", patch_bias, true);
    add("action_embed.weight", action_embed, false);
    add("action_embed.bias", action_bias, true);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const std::string pre = "blocks." + std::to_string(i) + ".";
      add(pre + "token_mix.weight", blocks[i].token_mix, false);
      add(pre + "token_mix.bias", blocks[i].token_bias, true);
      add(pre + "channel_fc1.weight", blocks[i].fc1, false);
      add(pre + "channel_fc1.bias", blocks[i].fc1_bias, true);
      add(pre + "channel_fc2.weight", blocks[i].fc2, false);
      add(pre + "channel_fc2.bias", blocks[i].fc2_bias, true);
    }
    add("decode.weight", decode, false);
    add("decode.bias", decode_bias, true);
    return out;
  }

  std::vector<TensorView<const T>> tensors() const {
    std::vector<TensorView<const T>> out;
    for (auto& t : const_cast<MixerParams*>(this)->tensors()) {
      out.push_back({t.name, t.dims, std::span<const T>(t.values.data(), t.values.size())});
    }
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors()) n += t.values.size();
    return n;
  }

  void set_zero() {
    for (auto& t : tensors()) std::fill(t.values.begin(), t.values.end(), T(0));
  }

  bool all_finite() const {
    for (const auto& t : tensors()) {
      for (T v : t.values) {
        if (!std::isfinite(v)) return false;
      }
    }
    return true;
  }

  template <typename U>
  MixerParams<U> cast() const {
    MixerParams<U> p;
    p.patch_embed = patch_embed.template cast<U>();
    p.patch_bias = patch_bias.template cast<U>();
    p.action_embed = action_embed.template cast<U>();
    p.action_bias = action_bias.template cast<U>();
    p.blocks.resize(blocks.size());
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      p.blocks[i].token_mix = blocks[i].token_mix.template cast<U>();
      p.blocks[i].token_bias = blocks[i].token_bias.template cast<U>();
      p.blocks[i].fc1 = blocks[i].fc1.template cast<U>();
      p.blocks[i].fc1_bias = blocks[i].fc1_bias.template cast<U>();
      p.blocks[i].fc2 = blocks[i].fc2.template cast<U>();
      p.blocks[i].fc2_bias = blocks[i].fc2_bias.template cast<U>();
    }
    p.decode = decode.template cast<U>();
    p.decode_bias = decode_bias.template cast<U>();
    return p;
  }
};

/// Scaled-normal initialisation. The decoder starts at zero, so with residual
/// output the initial model is the identity map.
template <typename T>
MixerParams<T> init_params(const DynamicsConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  MixerParams<T> p = MixerParams<T>::zeros(cfg);
  RngStream rng(seed);
  auto fill = [&](RowMat<T>& m, double std) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(std * rng.normal());
  };
  const double D = cfg.token_dim, H = cfg.channel_hidden, N = cfg.num_tokens();
  fill(p.patch_embed, 1.0 / std::sqrt(static_cast<double>(cfg.patch_values())));
  fill(p.action_embed, 1.0 / std::sqrt(3.0));
  for (auto& b : p.blocks) {
    fill(b.token_mix, 0.5 / std::sqrt(N));
    fill(b.fc1, 1.0 / std::sqrt(D));
    fill(b.fc2, 0.5 / std::sqrt(H));
  }
  return p;
}

template <typename T>
struct MixerCache {
  struct Block {
    RowMat<T> input, mixed_act, after_mix, hidden_act;
  };
  RowMat<T> patches;  // [Np, P]
  RowMat<T> action;   // [1, 3] normalised
  std::vector<Block> blocks;
  RowMat<T> final_tokens;
};

/// Maps a 32x32x3 image (row-major, channel-interleaved) to patch rows.
template <typename T, typename Src>
RowMat<T> patchify(const DynamicsConfig& cfg, std::span<const Src> image) {
  const int ps = cfg.patch_size, side = cfg.patches_per_side(), W = cfg.image_size;
  RowMat<T> out(cfg.num_patches(), cfg.patch_values());
  for (int pr = 0; pr < side; ++pr) {
    for (int pc = 0; pc < side; ++pc) {
      T* row = out.row(pr * side + pc).data();
      for (int i = 0; i < ps; ++i) {
        const Src* src = image.data() + ((pr * ps + i) * W + pc * ps) * 3;
        for (int k = 0; k < ps * 3; ++k) row[i * ps * 3 + k] = static_cast<T>(src[k]);
      }
    }
  }
  return out;
}

template <typename T, typename Dst>
void unpatchify(const DynamicsConfig& cfg, const RowMat<T>& patches, std::span<Dst> image) {
  const int ps = cfg.patch_size, side = cfg.patches_per_side(), W = cfg.image_size;
  for (int pr = 0; pr < side; ++pr) {
    for (int pc = 0; pc < side; ++pc) {
      const T* row = patches.row(pr * side + pc).data();
      for (int i = 0; i < ps; ++i) {
        Dst* dst = image.data() + ((pr * ps + i) * W + pc * ps) * 3;
        for (int k = 0; k < ps * 3; ++k) dst[k] = static_cast<Dst>(row[i * ps * 3 + k]);
      }
    }
  }
}

/// Action components scaled to roughly unit range before embedding.
template <typename T>
RowMat<T> normalise_action(const std::array<double, 3>& a) {
  RowMat<T> out(1, 3);
  out << static_cast<T>(a[0] / 0.08), static_cast<T>(a[1] / 0.08), static_cast<T>(a[2]);
  return out;
}

/// Pre-clamp prediction in patch layout.
template <typename T>
RowMat<T> mixer_forward(const DynamicsConfig& cfg, const MixerParams<T>& p, const RowMat<T>& patches,
                        const RowMat<T>& action, MixerCache<T>* cache) {
  const int Np = cfg.num_patches(), N = cfg.num_tokens();
  RowMat<T> h(N, cfg.token_dim);
  h.topRows(Np).noalias() = patches * p.patch_embed;
  h.topRows(Np).rowwise() += p.patch_bias.row(0);
  h.row(Np).noalias() = action * p.action_embed;
  h.row(Np) += p.action_bias.row(0);

  if (cache) {
    cache->patches = patches;
    cache->action = action;
    cache->blocks.resize(p.blocks.size());
  }
  for (std::size_t bi = 0; bi < p.blocks.size(); ++bi) {
    const auto& b = p.blocks[bi];
    RowMat<T> z = b.token_mix * h;
    z.colwise() += b.token_bias.col(0);
    RowMat<T> s = z.array().tanh().matrix();
    RowMat<T> u = h + s;
    RowMat<T> q = u * b.fc1;
    q.rowwise() += b.fc1_bias.row(0);
    RowMat<T> r = q.array().tanh().matrix();
    RowMat<T> next = u;
    next.noalias() += r * b.fc2;
    next.rowwise() += b.fc2_bias.row(0);
    if (cache) {
      auto& c = cache->blocks[bi];
      c.input = std::move(h);
      c.mixed_act = std::move(s);
      c.after_mix = std::move(u);
      c.hidden_act = std::move(r);
    }
    h = std::move(next);
  }

  RowMat<T> out = h.topRows(Np) * p.decode;
  out.rowwise() += p.decode_bias.row(0);
  if (cfg.residual_output) out += patches;
  if (cache) cache->final_tokens = std::move(h);
  return out;
}

/// Accumulates parameter gradients (grads += dL/dparams) for one sample
/// given dL/d(pre-clamp prediction) in patch layout.
template <typename T>
void mixer_backward(const DynamicsConfig& cfg, const MixerParams<T>& p, const MixerCache<T>& cache,
                    const RowMat<T>& d_out, MixerParams<T>& grads) {
  const int Np = cfg.num_patches(), N = cfg.num_tokens();
  const auto top = cache.final_tokens.topRows(Np);
  grads.decode.noalias() += top.transpose() * d_out;
  grads.decode_bias += d_out.colwise().sum();

  RowMat<T> dh = RowMat<T>::Zero(N, cfg.token_dim);
  dh.topRows(Np).noalias() = d_out * p.decode.transpose();

  for (std::size_t bi = p.blocks.size(); bi-- > 0;) {
    const auto& b = p.blocks[bi];
    const auto& c = cache.blocks[bi];
    auto& g = grads.blocks[bi];

    // next = u + tanh(u W1 + b1) W2 + b2
    g.fc2.noalias() += c.hidden_act.transpose() * dh;
    g.fc2_bias += dh.colwise().sum();
    RowMat<T> dq = (dh * b.fc2.transpose()).array() * (T(1) - c.hidden_act.array().square());
    g.fc1.noalias() += c.after_mix.transpose() * dq;
    g.fc1_bias += dq.colwise().sum();
    RowMat<T> du = dh;
    du.noalias() += dq * b.fc1.transpose();

    // u = h + tanh(M h + bm)
    RowMat<T> dz = du.array() * (T(1) - c.mixed_act.array().square());
    g.token_mix.noalias() += dz * c.input.transpose();
    g.token_bias += dz.rowwise().sum();
    dh = du;
    dh.noalias() += b.token_mix.transpose() * dz;
  }

  grads.patch_embed.noalias() += cache.patches.transpose() * dh.topRows(Np);
  grads.patch_bias += dh.topRows(Np).colwise().sum();
  grads.action_embed.noalias() += cache.action.transpose() * dh.row(Np);
  grads.action_bias += dh.row(Np);
}

}  // namespace rollplan
