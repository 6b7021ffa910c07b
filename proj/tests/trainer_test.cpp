#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <vector>

#include "gradcheck.hpp"
#include "rollplan/trainer.hpp"
#include "temp_dir.hpp"

using namespace rollplan;

namespace {

DynamicsConfig small_config() {
  DynamicsConfig c;
  c.token_dim = 16;
  c.channel_hidden = 24;
  c.action_embed_dim = 16;
  c.num_mix_blocks = 1;
  return c;
}

Dataset small_dataset(int episodes = 12, std::uint64_t seed = 3) {
  return collect_dataset(episodes, all_task_templates(), ScriptedPolicy(), 0.2, seed);
}

std::vector<std::uint8_t> read_all(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_all(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<double> flatten(const MixerParams<double>& p) {
  std::vector<double> out;
  for (const auto& t : p.tensors()) out.insert(out.end(), t.values.begin(), t.values.end());
  return out;
}

std::vector<float> flatten(const MixerParams<float>& p) {
  std::vector<float> out;
  for (const auto& t : p.tensors()) out.insert(out.end(), t.values.begin(), t.values.end());
  return out;
}

MixerParams<double> perturbed_params(const DynamicsConfig& cfg, std::uint64_t seed) {
  MixerParams<double> p = init_params<double>(cfg, seed);
  RngStream rng(seed);
  for (auto& t : p.tensors()) {
    for (auto& v : t.values) v += 0.03 * rng.normal();
  }
  return p;
}

Image random_image(RngStream& rng) {
  Image img;
  for (auto& v : img.px) v = static_cast<float>(rng.uniform());
  return img;
}

}  // namespace

// ---------------------------------------------------------------------------
// Loss

TEST_CASE("loss of identical images is zero") {
  RngStream rng(1);
  const Image a = random_image(rng);
  const LossParts l = loss(a, a);
  CHECK(l.total == 0.0);
  CHECK(l.l1 == 0.0);
  CHECK(l.gdl == 0.0);
}

TEST_CASE("constant fields") {
  const LossParts l = loss(Image::filled(0.3f), Image::filled(0.5f));
  CHECK(l.l1 == doctest::Approx(0.2).epsilon(1e-6));
  CHECK(l.gdl == 0.0);
  CHECK(l.total == doctest::Approx(0.2).epsilon(1e-6));
}

TEST_CASE("loss matches the reference implementation") {
  RngStream rng(2);
  for (int i = 0; i < 20; ++i) {
    const Image a = random_image(rng), b = random_image(rng);
    const double lambda = 0.5 + rng.uniform();
    const std::vector<double> pa(a.px.begin(), a.px.end()), pb(b.px.begin(), b.px.end());
    CHECK(loss(a, b, lambda).total == doctest::Approx(gradcheck::reference_loss(pa, pb, lambda)).epsilon(1e-6));
    CHECK(loss(a, b, lambda).total >= 0.0);
  }
}

TEST_CASE("loss gradient matches finite differences away from kinks") {
  RngStream rng(3);
  std::vector<double> p(kNumPixels), t(kNumPixels), g(kNumPixels);
  for (int r = 0; r < kImageSize; ++r) {
    for (int c = 0; c < kImageSize; ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        const int i = (r * kImageSize + c) * 3 + ch;
        p[i] = rng.uniform();
        t[i] = p[i] + 0.2 + 0.4 * ((r + 2 * c) % 3);
      }
    }
  }
  image_loss<double>(p, t, 1.0, g, 1.0);
  for (int k = 0; k < 50; ++k) {
    const std::size_t i = rng.next_u64() % kNumPixels;
    const double h = 1e-4, o = p[i];
    p[i] = o + h;
    const double lp = gradcheck::reference_loss(p, t, 1.0);
    p[i] = o - h;
    const double lm = gradcheck::reference_loss(p, t, 1.0);
    p[i] = o;
    CHECK(g[i] == doctest::Approx((lp - lm) / (2 * h)).epsilon(1e-6));
  }
}

TEST_CASE("wrong buffer sizes are rejected") {
  std::vector<float> a(10), b(10);
  CHECK_THROWS_AS(image_loss<float>(a, b, 1.0), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Optimiser

TEST_CASE("one Adam step on a quadratic matches the closed form") {
  // f(x) = 0.5 (x - 3)^2 at x = 1: g = -2, and after bias correction
  // m_hat = g, v_hat = g^2, so x1 = x0 - lr g / (|g| + eps).
  const double lr = 0.01, eps = 1e-8;
  Adam<double> adam(1, {lr, 0.9, 0.999, eps});
  double x = 1.0, g = x - 3.0;
  std::span<double> ps(&x, 1), gs(&g, 1);
  const std::span<double> pv[] = {ps};
  const std::span<double> gv[] = {gs};
  adam.step(pv, gv);
  CHECK(std::abs(x - (1.0 - lr * -2.0 / (2.0 + eps))) < 1e-12);
}

TEST_CASE("Adam matches an independent recurrence over several steps") {
  const double lr = 0.05, b1 = 0.8, b2 = 0.99, eps = 1e-6;
  Adam<double> adam(2, {lr, b1, b2, eps});
  double x[2] = {1.0, -2.0};
  double ref[2] = {1.0, -2.0}, m[2] = {0, 0}, v[2] = {0, 0};
  for (int t = 1; t <= 5; ++t) {
    double g[2] = {2 * x[0], 4 * (x[1] + 1)};
    std::span<double> ps(x, 2), gs(g, 2);
    const std::span<double> pv[] = {ps};
    const std::span<double> gv[] = {gs};
    adam.step(pv, gv);
    for (int i = 0; i < 2; ++i) {
      const double gi = i == 0 ? 2 * ref[0] : 4 * (ref[1] + 1);
      m[i] = b1 * m[i] + (1 - b1) * gi;
      v[i] = b2 * v[i] + (1 - b2) * gi * gi;
      const double mh = m[i] / (1 - std::pow(b1, t)), vh = v[i] / (1 - std::pow(b2, t));
      ref[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
    CHECK(std::abs(x[0] - ref[0]) < 1e-12);
    CHECK(std::abs(x[1] - ref[1]) < 1e-12);
  }
  CHECK(adam.steps() == 5);
}

// ---------------------------------------------------------------------------
// Gradients

TEST_CASE("analytic gradients match central differences on every tensor") {
  const auto res = gradcheck::run(DynamicsConfig{});
  CHECK(res.tensors.size() == 4 + 6 * 2 + 2);
  for (const auto& t : res.tensors) {
    INFO(t.name << " relative error " << t.relative_error);
    CHECK(t.grad_norm > 0);
    CHECK(t.relative_error < 1e-4);
  }
}

TEST_CASE("length-1 windows reproduce the one-step gradient") {
  const DynamicsConfig cfg = small_config();
  const MixerParams<double> p = perturbed_params(cfg, 4);
  RngStream rng(5);
  std::vector<EpisodeTrace> eps(3);
  for (auto& ep : eps) {
    ep.frames = {random_image(rng), random_image(rng)};
    ep.actions = {Action(0.03, -0.01, 0.5)};
  }
  std::vector<Window> windows;
  for (const auto& ep : eps) windows.push_back({&ep, 0, 1});
  MixerParams<double> got = MixerParams<double>::zeros(cfg);
  window_gradients<double>(cfg, p, windows, 1.0, got);

  // Oracle: per-sample forward, loss gradient, backward, averaged.
  MixerParams<double> want = MixerParams<double>::zeros(cfg);
  for (const auto& ep : eps) {
    std::vector<double> in(ep.frames[0].px.begin(), ep.frames[0].px.end());
    std::vector<double> tgt(ep.frames[1].px.begin(), ep.frames[1].px.end());
    std::vector<double> pred(kNumPixels), g(kNumPixels);
    MixerCache<double> cache;
    const RowMat<double> out = mixer_forward<double>(cfg, p, patchify<double, double>(cfg, std::span<const double>(in)),
                                                     normalise_action<double>(ep.actions[0].as_array()), &cache);
    unpatchify<double, double>(cfg, out, std::span<double>(pred));
    image_loss<double>(pred, tgt, 1.0, g, 1.0 / 3.0);
    mixer_backward<double>(cfg, p, cache, patchify<double, double>(cfg, std::span<const double>(g)), want);
  }
  const auto a = flatten(got), b = flatten(want);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == doctest::Approx(b[i]).epsilon(1e-12).scale(1e-12));
}

TEST_CASE("multi-step windows stop gradients between steps") {
  const DynamicsConfig cfg = small_config();
  const MixerParams<double> p = perturbed_params(cfg, 6);
  RngStream rng(7);
  EpisodeTrace ep;
  ep.frames = {random_image(rng), random_image(rng), random_image(rng)};
  ep.actions = {Action(0.02, 0.01, 0), Action(-0.03, 0.0, 1)};
  const std::vector<Window> two = {{&ep, 0, 2}};
  MixerParams<double> got = MixerParams<double>::zeros(cfg);
  const auto parts = window_gradients<double>(cfg, p, two, 1.0, got);
  REQUIRE(parts.size() == 2);

  // Oracle: the second step starts from the clamped first prediction, taken
  // as a constant input.
  const auto pred0 = gradcheck::predict(cfg, p, ep.frames[0], ep.actions[0]);
  Image fed;
  for (int i = 0; i < kNumPixels; ++i) fed.px[i] = static_cast<float>(std::clamp(pred0[i], 0.0, 1.0));
  EpisodeTrace first{0, true, {ep.frames[0], ep.frames[1]}, {ep.actions[0]}};
  EpisodeTrace second{0, true, {fed, ep.frames[2]}, {ep.actions[1]}};
  const std::vector<Window> ones = {{&first, 0, 1}, {&second, 0, 1}};
  MixerParams<double> want = MixerParams<double>::zeros(cfg);
  window_gradients<double>(cfg, p, ones, 1.0, want);

  const auto a = flatten(got), b = flatten(want);
  double diff = 0, norm = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    norm += b[i] * b[i];
  }
  // The oracle's fed frame is rounded to float.
  CHECK(std::sqrt(diff / norm) < 1e-5);
}

// ---------------------------------------------------------------------------
// Dataset

TEST_CASE("collection bookkeeping and determinism") {
  test::TempDir dir;
  CollectStats stats;
  const Dataset a = collect_dataset(12, all_task_templates(), ScriptedPolicy(), 0.2, 3, &stats);
  CHECK(stats.episodes == 12);
  CHECK(stats.transitions == a.records.size());

  std::vector<int> steps(12, 0);
  for (const auto& r : a.records) {
    REQUIRE(r.episode_id < 12);
    CHECK(r.step_index == steps[r.episode_id]);
    ++steps[r.episode_id];
  }
  CHECK(std::accumulate(steps.begin(), steps.end(), std::size_t{0}) == a.records.size());

  save_dataset(a, dir / "a.bin");
  save_dataset(small_dataset(), dir / "b.bin");
  CHECK(read_all(dir / "a.bin") == read_all(dir / "b.bin"));
  CHECK(read_all(dir / "a.bin").size() == 4 + 4 + 8 + a.records.size() * kRecordBytes + 4 + 16);
}

TEST_CASE("consecutive records chain frames and actions") {
  const Dataset ds = small_dataset(4);
  for (std::size_t i = 0; i + 1 < ds.records.size(); ++i) {
    const auto& r = ds.records[i];
    const auto& n = ds.records[i + 1];
    if (n.episode_id == r.episode_id) CHECK(n.image == r.next_image);
  }
  // Replaying the logged actions reproduces the logged frames.
  const auto tasks = all_task_templates();
  const auto eps = episodes_from(ds, true);
  for (const auto& ep : eps) {
    const Task& task = tasks[ep.episode_id % tasks.size()];
    WorldState s = reset(task, derive_seed({3, ep.episode_id}));
    for (std::size_t t = 0; t < ep.actions.size(); ++t) {
      CHECK(from_bytes(to_bytes(render(s, &task))) == ep.frames[t]);
      s = step(s, ep.actions[t]);
    }
  }
}

TEST_CASE("dataset round trip and errors") {
  test::TempDir dir;
  Dataset ds = small_dataset(5);
  ds.provenance = {0x1234, 3};
  save_dataset(ds, dir / "d.bin");
  const Dataset back = load_dataset(dir / "d.bin");
  CHECK(back.records == ds.records);
  CHECK(back.provenance == ds.provenance);

  const auto good = read_all(dir / "d.bin");
  SUBCASE("truncated") {
    write_all(dir / "t.bin", std::vector<std::uint8_t>(good.begin(), good.begin() + 100));
    CHECK_THROWS_AS(load_dataset(dir / "t.bin"), DatasetTruncatedError);
  }
  SUBCASE("count beyond the data") {
    auto bad = good;
    bad[8] = 0xff;
    bad[9] = 0xff;
    write_all(dir / "c.bin", bad);
    CHECK_THROWS_AS(load_dataset(dir / "c.bin"), DatasetTruncatedError);
  }
  SUBCASE("bad magic") {
    auto bad = good;
    bad[1] = 'X';
    write_all(dir / "m.bin", bad);
    CHECK_THROWS_AS(load_dataset(dir / "m.bin"), DatasetError);
  }
  SUBCASE("missing file names the path") {
    try {
      load_dataset(dir / "missing.bin");
      FAIL("expected an error");
    } catch (const DatasetError& e) {
      CHECK(std::string(e.what()).find("missing.bin") != std::string::npos);
    }
  }
}

TEST_CASE("loader filters to successful episodes") {
  const Dataset ds = small_dataset(20);
  const auto kept = episodes_from(ds);
  const auto all = episodes_from(ds, true);
  CHECK(all.size() == 20);
  CHECK(kept.size() < all.size());
  std::size_t frames = 0;
  for (const auto& ep : kept) {
    CHECK(ep.success);
    CHECK(ep.frames.size() == ep.actions.size() + 1);
    frames += ep.actions.size();
  }
  std::size_t successful_records = 0;
  for (const auto& r : ds.records) successful_records += r.episode_success ? 1 : 0;
  CHECK(frames == successful_records);
}

TEST_CASE("non-consecutive steps are rejected") {
  Dataset ds = small_dataset(2);
  ds.records.erase(ds.records.begin() + 1);
  CHECK_THROWS_AS(episodes_from(ds, true), DatasetError);
}

TEST_CASE("held-out split takes the last tenth by id") {
  std::vector<EpisodeTrace> eps(25);
  for (std::size_t i = 0; i < eps.size(); ++i) eps[i].episode_id = static_cast<std::uint32_t>(100 - i);
  const auto split = split_heldout(eps);
  REQUIRE(split.heldout.size() == 3);
  CHECK(split.train.size() == 22);
  for (const auto& h : split.heldout) {
    for (const auto& t : split.train) CHECK(t.episode_id < h.episode_id);
  }
  CHECK(split_heldout(std::vector<EpisodeTrace>(1)).heldout.empty());
}

TEST_CASE("500 collected episodes include at least 200 successes") {
  CollectStats stats;
  collect_dataset(500, all_task_templates(), ScriptedPolicy(), 0.2, 0, &stats);
  MESSAGE("successful episodes: " << stats.successful_episodes);
  CHECK(stats.successful_episodes >= 200);
}

// ---------------------------------------------------------------------------
// Training

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.l_train_schedule = {1, 4};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  const auto eps = episodes_from(small_dataset(8));
  DynamicsModel m(small_config(), 2);
  const auto before = flatten(m.params());
  TrainConfig c;
  c.learning_rate = 0.0;
  c.phase1_epochs = 1;
  c.phase2_epochs = 1;
  c.l_train_schedule = {2};
  train_phase1(m, eps, c);
  train_phase2_dagger(m, eps, c);
  CHECK(flatten(m.params()) == before);
}

TEST_CASE("training is deterministic and lowers the loss") {
  const auto eps = episodes_from(small_dataset(16));
  TrainConfig c;
  c.phase1_epochs = 4;
  c.phase2_epochs = 2;
  c.l_train_schedule = {2, 3};
  c.seed = 9;
  auto train = [&] {
    DynamicsModel m(small_config(), c.seed);
    auto logs = train_phase1(m, eps, c);
    auto more = train_phase2_dagger(m, eps, c);
    logs.insert(logs.end(), more.begin(), more.end());
    return std::make_pair(flatten(m.params()), logs);
  };
  const auto [wa, la] = train();
  const auto [wb, lb] = train();
  CHECK(wa == wb);
  REQUIRE(la.size() == 6);
  CHECK(la[3].mean_loss < la[0].mean_loss);
  CHECK(la[4].horizon == 2);
  CHECK(la[5].horizon == 3);
  CHECK(la[5].per_step_loss.size() == 3);
  for (std::size_t i = 0; i < la.size(); ++i) CHECK(la[i].mean_loss == lb[i].mean_loss);
}

TEST_CASE("epochs split across the schedule") {
  const auto eps = episodes_from(small_dataset(8));
  TrainConfig c;
  c.phase2_epochs = 5;
  c.l_train_schedule = {2, 3};
  DynamicsModel m(small_config(), 1);
  const auto logs = train_phase2_dagger(m, eps, c);
  REQUIRE(logs.size() == 5);
  CHECK(logs[2].horizon == 2);
  CHECK(logs[3].horizon == 3);
}

TEST_CASE("training errors") {
  const auto eps = episodes_from(small_dataset(8));
  TrainConfig c;
  c.phase1_epochs = 1;
  SUBCASE("empty dataset") {
    DynamicsModel m(small_config(), 1);
    CHECK_THROWS_AS(train_phase1(m, {}, c), TrainingError);
  }
  SUBCASE("no window fits") {
    DynamicsModel m(small_config(), 1);
    c.l_train_schedule = {500};
    CHECK_THROWS_AS(train_phase2_dagger(m, eps, c), InsufficientEpisodeLengthError);
  }
  SUBCASE("non-finite loss mentions the learning rate") {
    DynamicsModel m(small_config(), 1);
    m.params().decode(0, 0) = std::numeric_limits<float>::infinity();
    try {
      train_phase1(m, eps, c);
      FAIL("expected a training error");
    } catch (const TrainingError& e) {
      CHECK(std::string(e.what()).find("learning rate") != std::string::npos);
    }
  }
}
