#include "rollplan/dynamics.hpp"

#include <algorithm>

#include "binio.hpp"

namespace rollplan {

namespace {

constexpr char kWeightMagic[] = "STWM";
constexpr char kProvenanceMagic[] = "PROV";

}  // namespace

DynamicsModel::DynamicsModel(DynamicsConfig config, std::uint64_t init_seed)
    : config_(config), params_(init_params<float>(config, init_seed)) {}

DynamicsModel::DynamicsModel(DynamicsConfig config, MixerParams<float> params)
    : config_(config), params_(std::move(params)) {
  config_.validate();
}

Image forward(const DynamicsModel& model, const Image& image, const Action& action) {
  if (!model.params().all_finite()) {
    throw CorruptModelError("dynamics model has non-finite parameters");
  }
  const auto& cfg = model.config();
  const RowMat<float> patches = patchify<float, float>(cfg, std::span<const float>(image.px));
  const RowMat<float> pred =
      mixer_forward<float>(cfg, model.params(), patches, normalise_action<float>(action.as_array()), nullptr);
  Image out;
  unpatchify<float, float>(cfg, pred, std::span<float>(out.px));
  for (float& v : out.px) v = std::clamp(v, 0.f, 1.f);
  return out;
}

std::vector<RolloutStep> rollout(const DynamicsModel& model, const Image& image0, const Policy& policy,
                                 const Task& task, int length, const Action& first_action,
                                 const std::optional<ResampleOptions>& resample) {
  if (length < 1) throw std::invalid_argument("rollout length must be at least 1");
  std::vector<RolloutStep> out;
  out.reserve(length);
  Action action = first_action;
  const Image* current = &image0;
  for (int t = 0; t < length; ++t) {
    if (t > 0) {
      if (resample) {
        RngStream rng(derive_seed({resample->stream_seed, static_cast<std::uint64_t>(t)}));
        action = policy.propose({*current, task, resample->temperature, &rng});
      } else {
        action = policy.propose({*current, task, 0.0, nullptr});
      }
    }
    out.push_back({action, forward(model, *current, action)});
    current = &out.back().frame;
  }
  return out;
}

void save_weights(const DynamicsModel& model, const std::filesystem::path& path,
                  const Provenance& provenance) {
  const auto& cfg = model.config();
  binio::Writer w;
  w.text(kWeightMagic);
  w.u32(kWeightFormatVersion);
  w.i32(cfg.patch_size);
  w.i32(cfg.token_dim);
  w.i32(cfg.num_mix_blocks);
  w.i32(cfg.channel_hidden);
  w.i32(cfg.action_embed_dim);
  w.i32(cfg.residual_output ? 1 : 0);
  for (const auto& t : model.params().tensors()) {
    w.u32(static_cast<std::uint32_t>(t.name.size()));
    w.text(t.name);
    w.u32(static_cast<std::uint32_t>(t.dims.size()));
    for (int d : t.dims) w.u32(static_cast<std::uint32_t>(d));
    for (float v : t.values) w.f32(v);
  }
  w.text(kProvenanceMagic);
  w.u64(provenance.config_hash);
  w.u64(provenance.seed);
  binio::write_file(path, w.buffer());
}

DynamicsModel load_weights(const std::filesystem::path& path, Provenance* provenance) {
  const std::vector<std::uint8_t> data = binio::read_file(path);
  binio::Reader<WeightTruncatedError> r(data, path.string());

  if (r.remaining() < 4) throw WeightTruncatedError(path.string() + ": file too short for a weight header");
  if (r.text(4) != kWeightMagic) {
    throw WeightFormatError(path.string() + ": not a weight file (bad magic)");
  }
  const std::uint32_t version = r.u32();
  if (version != kWeightFormatVersion) {
    throw WeightFormatError(path.string() + ": unsupported weight format version " +
                            std::to_string(version));
  }
  DynamicsConfig cfg;
  cfg.patch_size = r.i32();
  cfg.token_dim = r.i32();
  cfg.num_mix_blocks = r.i32();
  cfg.channel_hidden = r.i32();
  cfg.action_embed_dim = r.i32();
  cfg.residual_output = r.i32() != 0;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw WeightShapeError(path.string() + ": invalid config block: " + e.what());
  }
  // Guard allocation against absurd configs from corrupted headers.
  if (cfg.token_dim > 4096 || cfg.channel_hidden > 16384 || cfg.num_mix_blocks > 64) {
    throw WeightShapeError(path.string() + ": config dimensions out of range");
  }

  MixerParams<float> params = MixerParams<float>::zeros(cfg);
  for (auto& t : params.tensors()) {
    const std::uint32_t name_len = r.u32();
    if (name_len > 256) throw WeightShapeError(path.string() + ": implausible tensor name length");
    const std::string name = r.text(name_len);
    if (name != t.name) {
      throw WeightShapeError(path.string() + ": expected tensor '" + t.name + "', found '" + name + "'");
    }
    const std::uint32_t rank = r.u32();
    if (rank != t.dims.size()) {
      throw WeightShapeError(path.string() + ": tensor '" + name + "' has rank " + std::to_string(rank));
    }
    for (int expected : t.dims) {
      const std::uint32_t d = r.u32();
      if (d != static_cast<std::uint32_t>(expected)) {
        throw WeightShapeError(path.string() + ": tensor '" + name + "' dimension " + std::to_string(d) +
                               " != " + std::to_string(expected));
      }
    }
    for (float& v : t.values) v = r.f32();
  }

  Provenance prov;
  if (r.remaining() > 0) {
    if (r.text(4) != kProvenanceMagic) throw WeightFormatError(path.string() + ": trailing garbage");
    prov.config_hash = r.u64();
    prov.seed = r.u64();
  }
  if (provenance) *provenance = prov;
  return DynamicsModel(cfg, std::move(params));
}

}  // namespace rollplan
