#include "rollplan/trainer.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <random>

#include "binio.hpp"

namespace rollplan {

namespace {

constexpr char kDatasetMagic[] = "STDS";
constexpr char kProvenanceMagic[] = "PROV";

template <typename T>
T sign(T v) {
  return static_cast<T>((v > T(0)) - (v < T(0)));
}

std::vector<std::span<float>> flat_views(MixerParams<float>& p) {
  std::vector<std::span<float>> out;
  for (auto& t : p.tensors()) out.push_back(t.values);
  return out;
}

Adam<float> make_adam(const DynamicsModel& model, const TrainConfig& cfg) {
  return Adam<float>(model.parameter_count(),
                     {cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps});
}

struct BatchOutcome {
  std::vector<LossParts> per_step;
  std::size_t windows = 0;
};

/// One optimizer step over a minibatch of windows.
BatchOutcome train_batch(DynamicsModel& model, std::span<const Window> batch, const TrainConfig& cfg,
                         Adam<float>& adam, MixerParams<float>& grads) {
  grads.set_zero();
  BatchOutcome out;
  out.per_step = window_gradients<float>(model.config(), model.params(), batch, cfg.lambda_gdl, grads);
  out.windows = batch.size();
  for (const auto& lp : out.per_step) {
    if (!std::isfinite(lp.total)) {
      throw TrainingError("non-finite training loss; lower the learning rate (currently " +
                          std::to_string(cfg.learning_rate) + ") or check the dataset");
    }
  }
  auto pv = flat_views(model.params());
  auto gv = flat_views(grads);
  adam.step(pv, gv);
  return out;
}

/// Runs epochs over a fixed window pool. Each epoch shuffles and uses at most
/// `per_epoch` windows, grouped `per_batch` at a time.
std::vector<EpochLog> run_epochs(DynamicsModel& model, std::vector<Window> pool, int epochs, int horizon,
                                 std::size_t per_epoch, std::size_t per_batch, const TrainConfig& cfg,
                                 Adam<float>& adam, std::uint64_t stream, const EpochCallback& on_epoch,
                                 int epoch_offset) {
  std::vector<EpochLog> logs;
  MixerParams<float> grads = MixerParams<float>::zeros(model.config());
  for (int e = 0; e < epochs; ++e) {
    std::mt19937_64 rng(derive_seed({cfg.seed, stream, static_cast<std::uint64_t>(e)}));
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::size_t used = std::min(per_epoch, pool.size());

    EpochLog log;
    log.epoch = epoch_offset + e;
    log.horizon = horizon;
    log.per_step_loss.assign(horizon, 0.0);
    double sum_loss = 0.0, sum_l1 = 0.0;
    std::size_t count = 0;
    for (std::size_t b = 0; b < used; b += per_batch) {
      const std::size_t n = std::min(per_batch, used - b);
      const BatchOutcome bo = train_batch(model, std::span<const Window>(pool.data() + b, n), cfg, adam, grads);
      for (int k = 0; k < horizon; ++k) {
        sum_loss += bo.per_step[k].total * static_cast<double>(n);
        sum_l1 += bo.per_step[k].l1 * static_cast<double>(n);
        log.per_step_loss[k] += bo.per_step[k].total * static_cast<double>(n);
      }
      count += n;
    }
    if (count > 0) {
      log.mean_loss = sum_loss / static_cast<double>(count * horizon);
      log.mean_l1 = sum_l1 / static_cast<double>(count * horizon);
      for (double& v : log.per_step_loss) v /= static_cast<double>(count);
    }
    if (on_epoch) on_epoch(log);
    logs.push_back(std::move(log));
  }
  return logs;
}

std::vector<Window> windows_of_length(const std::vector<EpisodeTrace>& episodes, int length) {
  std::vector<Window> out;
  for (const auto& ep : episodes) {
    const int steps = static_cast<int>(ep.actions.size());
    for (int s = 0; s + length <= steps; ++s) out.push_back({&ep, s, length});
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Dataset

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  binio::Writer w;
  w.text(kDatasetMagic);
  w.u32(kDatasetFormatVersion);
  w.u64(dataset.records.size());
  for (const auto& r : dataset.records) {
    w.bytes(r.image);
    for (float a : r.action) w.f32(a);
    w.bytes(r.next_image);
    w.u32(r.episode_id);
    w.u16(r.step_index);
    w.u8(r.episode_success ? 1 : 0);
    w.u8(0);
  }
  w.text(kProvenanceMagic);
  w.u64(dataset.provenance.config_hash);
  w.u64(dataset.provenance.seed);
  try {
    binio::write_file(path, w.buffer());
  } catch (const std::runtime_error& e) {
    throw DatasetError(std::string("saving dataset: ") + e.what());
  }
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::vector<std::uint8_t> data;
  try {
    data = binio::read_file(path);
  } catch (const std::runtime_error& e) {
    throw DatasetError(std::string("loading dataset: ") + e.what());
  }
  binio::Reader<DatasetTruncatedError> r(data, path.string());
  if (r.remaining() < 4 || r.text(4) != kDatasetMagic) {
    throw DatasetError(path.string() + ": not a dataset file (bad magic)");
  }
  const std::uint32_t version = r.u32();
  if (version != kDatasetFormatVersion) {
    throw DatasetError(path.string() + ": unsupported dataset version " + std::to_string(version));
  }
  const std::uint64_t count = r.u64();
  if (count > r.remaining() / kRecordBytes) {
    throw DatasetTruncatedError(path.string() + ": header claims " + std::to_string(count) +
                                " records but the file is too short");
  }
  Dataset ds;
  ds.records.resize(count);
  for (auto& rec : ds.records) {
    auto img = r.bytes(kNumPixels);
    std::copy(img.begin(), img.end(), rec.image.begin());
    for (float& a : rec.action) a = r.f32();
    auto next = r.bytes(kNumPixels);
    std::copy(next.begin(), next.end(), rec.next_image.begin());
    rec.episode_id = r.u32();
    rec.step_index = r.u16();
    rec.episode_success = r.u8() != 0;
    r.u8();
  }
  if (r.remaining() > 0) {
    if (r.text(4) != kProvenanceMagic) throw DatasetError(path.string() + ": trailing garbage");
    ds.provenance.config_hash = r.u64();
    ds.provenance.seed = r.u64();
  }
  return ds;
}

Dataset collect_dataset(int num_episodes, const std::vector<Task>& tasks, const Policy& policy,
                        double expert_temperature, std::uint64_t seed, CollectStats* stats) {
  if (num_episodes < 1) throw std::invalid_argument("collect_dataset needs at least one episode");
  if (tasks.empty()) throw std::invalid_argument("collect_dataset needs at least one task template");
  Dataset ds;
  ds.provenance.seed = seed;
  CollectStats st;
  for (int i = 0; i < num_episodes; ++i) {
    const Task& task = tasks[static_cast<std::size_t>(i) % tasks.size()];
    Episode ep(task, derive_seed({seed, static_cast<std::uint64_t>(i)}));
    const std::size_t first = ds.records.size();
    Image obs = render(ep.state(), &task);
    for (int t = 0; !ep.terminated(); ++t) {
      RngStream rng(derive_seed({seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(t) + 1}));
      const Action a = policy.propose({obs, task, expert_temperature, &rng});
      ep.apply(a);
      Image next = render(ep.state(), &task);
      TransitionRecord rec;
      rec.image = to_bytes(obs);
      rec.action = {static_cast<float>(a.dx()), static_cast<float>(a.dy()), static_cast<float>(a.dgrip())};
      rec.next_image = to_bytes(next);
      rec.episode_id = static_cast<std::uint32_t>(i);
      rec.step_index = static_cast<std::uint16_t>(t);
      ds.records.push_back(rec);
      obs = std::move(next);
    }
    const bool success = ep.outcome().success;
    for (std::size_t k = first; k < ds.records.size(); ++k) ds.records[k].episode_success = success;
    ++st.episodes;
    st.successful_episodes += success ? 1 : 0;
  }
  st.transitions = ds.records.size();
  if (stats) *stats = st;
  return ds;
}

std::vector<EpisodeTrace> episodes_from(const Dataset& dataset, bool include_failures) {
  std::map<std::uint32_t, EpisodeTrace> by_id;
  for (const auto& rec : dataset.records) {
    if (!rec.episode_success && !include_failures) continue;
    auto& ep = by_id[rec.episode_id];
    if (ep.frames.empty()) {
      ep.episode_id = rec.episode_id;
      ep.success = rec.episode_success;
      ep.frames.push_back(from_bytes(rec.image));
    } else if (rec.step_index != ep.actions.size()) {
      throw DatasetError("episode " + std::to_string(rec.episode_id) + " has non-consecutive steps");
    }
    ep.actions.push_back(rec.to_action());
    ep.frames.push_back(from_bytes(rec.next_image));
  }
  std::vector<EpisodeTrace> out;
  out.reserve(by_id.size());
  for (auto& [id, ep] : by_id) out.push_back(std::move(ep));
  return out;
}

EpisodeSplit split_heldout(std::vector<EpisodeTrace> episodes, double heldout_fraction) {
  std::sort(episodes.begin(), episodes.end(),
            [](const EpisodeTrace& a, const EpisodeTrace& b) { return a.episode_id < b.episode_id; });
  std::size_t held = static_cast<std::size_t>(std::ceil(heldout_fraction * episodes.size()));
  if (episodes.size() < 2) held = 0;
  EpisodeSplit split;
  const std::size_t cut = episodes.size() - held;
  split.train.assign(std::make_move_iterator(episodes.begin()), std::make_move_iterator(episodes.begin() + cut));
  split.heldout.assign(std::make_move_iterator(episodes.begin() + cut), std::make_move_iterator(episodes.end()));
  return split;
}

// ---------------------------------------------------------------------------
// Loss

template <typename T>
LossParts image_loss(std::span<const T> predicted, std::span<const T> target, double lambda_gdl,
                     std::span<T> grad, double scale) {
  constexpr int W = kImageSize, C = kChannels;
  if (predicted.size() != static_cast<std::size_t>(kNumPixels) || target.size() != predicted.size()) {
    throw std::invalid_argument("image_loss: buffers must hold 32x32x3 values");
  }
  const bool want_grad = !grad.empty();
  const double n_px = kNumPixels;
  const double n_grad = static_cast<double>(W * (W - 1) * C);

  double l1 = 0.0;
  for (int i = 0; i < kNumPixels; ++i) {
    const T d = predicted[i] - target[i];
    l1 += std::abs(static_cast<double>(d));
    if (want_grad) grad[i] = static_cast<T>(scale / n_px) * sign(d);
  }

  double gx = 0.0, gy = 0.0;
  const T gscale = static_cast<T>(scale * lambda_gdl / n_grad);
  auto idx = [](int row, int col, int ch) { return (row * W + col) * C + ch; };
  for (int row = 0; row < W; ++row) {
    for (int col = 0; col < W; ++col) {
      for (int ch = 0; ch < C; ++ch) {
        const int here = idx(row, col, ch);
        if (col + 1 < W) {
          const int right = idx(row, col + 1, ch);
          const T d = (predicted[right] - predicted[here]) - (target[right] - target[here]);
          gx += std::abs(static_cast<double>(d));
          if (want_grad) {
            const T s = gscale * sign(d);
            grad[right] += s;
            grad[here] -= s;
          }
        }
        if (row + 1 < W) {
          const int down = idx(row + 1, col, ch);
          const T d = (predicted[down] - predicted[here]) - (target[down] - target[here]);
          gy += std::abs(static_cast<double>(d));
          if (want_grad) {
            const T s = gscale * sign(d);
            grad[down] += s;
            grad[here] -= s;
          }
        }
      }
    }
  }
  LossParts out;
  out.l1 = l1 / n_px;
  out.gdl = gx / n_grad + gy / n_grad;
  out.total = out.l1 + lambda_gdl * out.gdl;
  return out;
}

template LossParts image_loss<float>(std::span<const float>, std::span<const float>, double, std::span<float>,
                                     double);
template LossParts image_loss<double>(std::span<const double>, std::span<const double>, double,
                                      std::span<double>, double);

LossParts loss(const Image& predicted, const Image& target, double lambda_gdl) {
  return image_loss<float>(predicted.px, target.px, lambda_gdl);
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (learning_rate < 0) throw std::invalid_argument("learning_rate must be non-negative");
  if (adam_beta1 < 0 || adam_beta1 >= 1 || adam_beta2 < 0 || adam_beta2 >= 1) {
    throw std::invalid_argument("adam betas must lie in [0,1)");
  }
  if (adam_eps <= 0) throw std::invalid_argument("adam_eps must be positive");
  if (lambda_gdl < 0) throw std::invalid_argument("lambda_gdl must be non-negative");
  if (phase1_epochs < 0 || phase2_epochs < 0) throw std::invalid_argument("epoch counts must be >= 0");
  for (int l : l_train_schedule) {
    if (l < 2) throw std::invalid_argument("l_train entries must be >= 2");
  }
}

template <typename T>
std::vector<LossParts> window_gradients(const DynamicsConfig& cfg, const MixerParams<T>& params,
                                        std::span<const Window> windows, double lambda_gdl,
                                        MixerParams<T>& grads) {
  if (windows.empty()) return {};
  const int horizon = windows.front().length;
  std::vector<LossParts> per_step(horizon);
  const double scale = 1.0 / (static_cast<double>(windows.size()) * horizon);

  std::vector<T> input(kNumPixels), pred_img(kNumPixels), target(kNumPixels), grad_img(kNumPixels);
  MixerCache<T> cache;
  for (const Window& w : windows) {
    if (w.length != horizon) throw std::invalid_argument("windows in a batch must share a length");
    const EpisodeTrace& ep = *w.episode;
    const auto& first = ep.frames[w.start].px;
    std::copy(first.begin(), first.end(), input.begin());
    for (int k = 0; k < horizon; ++k) {
      const int idx = w.start + k;
      const RowMat<T> patches = patchify<T, T>(cfg, std::span<const T>(input));
      const RowMat<T> pred = mixer_forward<T>(cfg, params, patches, normalise_action<T>(ep.actions[idx].as_array()),
                                              &cache);
      unpatchify<T, T>(cfg, pred, std::span<T>(pred_img));
      const auto& tgt = ep.frames[idx + 1].px;
      std::copy(tgt.begin(), tgt.end(), target.begin());
      const LossParts lp = image_loss<T>(pred_img, target, lambda_gdl, grad_img, scale);
      per_step[k].total += lp.total / windows.size();
      per_step[k].l1 += lp.l1 / windows.size();
      per_step[k].gdl += lp.gdl / windows.size();
      const RowMat<T> d_out = patchify<T, T>(cfg, std::span<const T>(grad_img));
      mixer_backward<T>(cfg, params, cache, d_out, grads);
      // Next input is the model's own (clamped) prediction; no gradient flows across steps.
      for (int i = 0; i < kNumPixels; ++i) input[i] = std::clamp(pred_img[i], T(0), T(1));
    }
  }
  return per_step;
}

template std::vector<LossParts> window_gradients<float>(const DynamicsConfig&, const MixerParams<float>&,
                                                        std::span<const Window>, double, MixerParams<float>&);
template std::vector<LossParts> window_gradients<double>(const DynamicsConfig&, const MixerParams<double>&,
                                                         std::span<const Window>, double,
                                                         MixerParams<double>&);

std::vector<EpochLog> train_phase1(DynamicsModel& model, const std::vector<EpisodeTrace>& episodes,
                                   const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  std::vector<Window> pool = windows_of_length(episodes, 1);
  if (pool.empty()) throw TrainingError("phase 1 needs a non-empty dataset");
  Adam<float> adam = make_adam(model, config);
  return run_epochs(model, std::move(pool), config.phase1_epochs, 1, std::numeric_limits<std::size_t>::max(),
                    static_cast<std::size_t>(config.batch_size), config, adam, 1, on_epoch, 0);
}

std::vector<EpochLog> train_phase2_dagger(DynamicsModel& model, const std::vector<EpisodeTrace>& episodes,
                                          const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  std::vector<EpochLog> logs;
  const auto& schedule = config.l_train_schedule;
  if (schedule.empty() || config.phase2_epochs == 0) return logs;

  std::size_t transitions = 0;
  for (const auto& ep : episodes) transitions += ep.actions.size();

  Adam<float> adam = make_adam(model, config);
  const int stages = static_cast<int>(schedule.size());
  int epoch_offset = 0;
  for (int si = 0; si < stages; ++si) {
    const int horizon = schedule[si];
    const int epochs = config.phase2_epochs / stages + (si < config.phase2_epochs % stages ? 1 : 0);
    std::vector<Window> pool = windows_of_length(episodes, horizon);
    if (pool.empty()) {
      throw InsufficientEpisodeLengthError("no episode is long enough for l_train = " + std::to_string(horizon));
    }
    // Keep the per-epoch step count and the per-update step count close to phase 1.
    const std::size_t per_epoch = (transitions + horizon - 1) / horizon;
    const std::size_t per_batch = std::max<std::size_t>(1, static_cast<std::size_t>(config.batch_size) / horizon);
    auto stage_logs = run_epochs(model, std::move(pool), epochs, horizon, per_epoch, per_batch, config, adam,
                                 100 + static_cast<std::uint64_t>(si), on_epoch, epoch_offset);
    epoch_offset += epochs;
    logs.insert(logs.end(), stage_logs.begin(), stage_logs.end());
  }
  return logs;
}

}  // namespace rollplan
