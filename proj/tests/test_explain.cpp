#include <catch2/catch_amalgamated.hpp>

#include "rhgr/explain/attribution.hpp"

using namespace rhgr;
using namespace rhgr::explain;

namespace {

Window random_window(Rng& rng, double scale = 1.0) {
  Window w(model::kWindowLen, Matrix(1, model::kFeatDim));
  for (auto& t : w)
    for (double& v : t.data) v = scale * rand_normal(rng);
  return w;
}

// A labeled synthetic recording with a class signature, as in the model
// tests: 10 gesture frames starting at `start`.
dsp::FeatureSequence make_rec(int cls, std::uint64_t seed, double doppler_gain = 1.0,
                              std::size_t total = 80, std::size_t start = 35) {
  dsp::FeatureSequence seq;
  seq.recording_id = "c" + std::to_string(cls) + "-s" + std::to_string(seed);
  seq.intended_class = cls;
  seq.frames.resize(total);
  seq.labels.assign(total, 0);
  Rng rng(seed);
  for (auto& fr : seq.frames) {
    fr.range_m = 0.1 * rand_normal(rng);
    fr.doppler_mps = 0.1 * rand_normal(rng);
    fr.azimuth_deg = 0.1 * rand_normal(rng);
    fr.elevation_deg = 0.1 * rand_normal(rng);
    fr.peak = 0.1 * rand_normal(rng);
  }
  for (std::size_t f = start; f < start + 10; ++f) {
    const double ph = static_cast<double>(f - start) / 9.0;
    seq.labels[f] = cls;
    seq.frames[f].peak += 2.0;
    seq.frames[f].range_m -= std::sin(3.14159 * ph);
    if (cls == 1) seq.frames[f].azimuth_deg += 2.0 - 4.0 * ph;
    else if (cls == 2) seq.frames[f].azimuth_deg -= 2.0 - 4.0 * ph;
    else seq.frames[f].doppler_mps += doppler_gain * (2.0 - 4.0 * ph);
  }
  return seq;
}

model::GruModel trained_model() {
  model::GruModel m;
  Rng rng(4);
  m.init(rng);
  model::WindowedDataset ds;
  for (int cls : {1, 2, 5})
    for (std::uint64_t s = 0; s < 6; ++s)
      ds.append(model::window_dataset(make_rec(cls, 100 * static_cast<std::uint64_t>(cls) + s)));
  model::TrainConfig tc;
  tc.epochs = 10;
  tc.seed = 3;
  model::train_classifier(m, ds, {}, tc);
  return m;
}

std::vector<Window> background_windows(std::uint64_t seed, std::size_t n = 8) {
  // nominal background frames: near-zero features
  Rng rng(seed);
  std::vector<Window> bg;
  for (std::size_t i = 0; i < n; ++i) bg.push_back(random_window(rng, 0.1));
  return bg;
}

}  // namespace

TEST_CASE("expected_gradients on controlled functions") {
  Rng rng(1);
  SECTION("x identical to a single-element background yields zero phi") {
    model::GruModel m;
    m.init(rng);
    Window x = random_window(rng);
    auto a = expected_gradients(m, x, {x}, 64, 2, 5);
    for (double v : a.phi.data) CHECK(v == 0.0);
    CHECK(a.base_value == Catch::Approx(model_logit(m, x, 2)));
  }
  SECTION("linear surrogate recovers the closed form") {
    // f(x) = sum w[t,d] * x[t,d]
    Matrix w(model::kWindowLen, model::kFeatDim);
    for (double& v : w.data) v = rand_normal(rng);
    GradFn lin = [&](const Window& p, double* f) {
      std::vector<Matrix> g(p.size(), Matrix(1, model::kFeatDim));
      double total = 0.0;
      for (std::size_t t = 0; t < p.size(); ++t)
        for (std::size_t j = 0; j < model::kFeatDim; ++j) {
          g[t](0, j) = w(t, j);
          total += w(t, j) * p[t](0, j);
        }
      if (f) *f = total;
      return g;
    };
    Window x = random_window(rng);
    auto bg = background_windows(9, 8);
    auto a = expected_gradients_fn(lin, x, bg, 1024, 0, 7);
    // closed form: (x - mean background) (.) w
    for (std::size_t t = 0; t < model::kWindowLen; ++t)
      for (std::size_t j = 0; j < model::kFeatDim; ++j) {
        double mean_bg = 0.0;
        for (const auto& r : bg) mean_bg += r[t](0, j);
        mean_bg /= static_cast<double>(bg.size());
        CHECK(a.phi(t, j) ==
              Catch::Approx((x[t](0, j) - mean_bg) * w(t, j)).margin(1e-3));
      }
    SECTION("completeness is exact for linear f") {
      double fx = 0.0, sum = a.base_value;
      lin(x, &fx);
      for (double v : a.phi.data) sum += v;
      CHECK(sum == Catch::Approx(fx).margin(1e-9));
    }
  }
  SECTION("empty background throws") {
    model::GruModel m;
    m.init(rng);
    Window x = random_window(rng);
    CHECK_THROWS_AS(expected_gradients(m, x, {}, 16, 1, 0), ConfigError);
  }
}

TEST_CASE("completeness on the trained recurrent model") {
  model::GruModel m = trained_model();
  Rng rng(12);
  auto bg = background_windows(13, 6);
  dsp::FeatureSequence seq = make_rec(5, 555);
  model::WindowedDataset ds = model::window_dataset(seq);
  Window x = window_from(ds, 40);  // label frame inside the gesture
  auto a = expected_gradients(m, x, bg, 4096, 5, 21);
  const double fx = model_logit(m, x, 5);
  double sum = a.base_value;
  for (double v : a.phi.data) sum += v;
  CHECK(sum == Catch::Approx(fx).epsilon(0.05));
}

TEST_CASE("null player: a feature with zeroed input weights gets no credit") {
  model::GruModel m = trained_model();
  // sever feature 3 (elevation) from the network
  for (std::size_t h = 0; h < model::kHiddenDim; ++h) {
    m.gru.wz(3, h) = 0.0;
    m.gru.wr(3, h) = 0.0;
    m.gru.wh(3, h) = 0.0;
  }
  auto bg = background_windows(14, 6);
  auto mats = gesture_attributions(m, make_rec(5, 77), bg, 5, 128, 3);
  auto i = global_attribution(mats);
  CHECK(i[3] < 1e-6);
  CHECK(i[1] > 1e-6);
}

TEST_CASE("gesture_attributions") {
  model::GruModel m = trained_model();
  auto bg = background_windows(15, 4);
  SECTION("a 10-frame gesture yields 17 window matrices") {
    auto mats = gesture_attributions(m, make_rec(1, 31), bg, 1, 32, 9);
    CHECK(mats.size() == 17);
    for (const auto& a : mats) {
      CHECK(a.phi.rows == model::kWindowLen);
      CHECK(a.phi.cols == model::kFeatDim);
      CHECK(a.target_class == 1);
    }
    // windows are consecutive, covering [start-3, end+4] label frames
    for (std::size_t k = 1; k < mats.size(); ++k)
      CHECK(mats[k].window_id == mats[k - 1].window_id + 1);
  }
  SECTION("deterministic under a fixed seed") {
    auto a = gesture_attributions(m, make_rec(2, 32), bg, 2, 32, 9);
    auto b = gesture_attributions(m, make_rec(2, 32), bg, 2, 32, 9);
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k].phi.data == b[k].phi.data);
    auto c = gesture_attributions(m, make_rec(2, 32), bg, 2, 32, 10);
    CHECK(a[0].phi.data != c[0].phi.data);
  }
  SECTION("unlabeled recordings fall back to refined labels") {
    dsp::FeatureSequence seq = make_rec(5, 33);
    seq.labels.assign(seq.size(), 0);
    auto mats = gesture_attributions(m, seq, bg, 5, 16, 9);
    CHECK(mats.size() >= 10);
  }
}

TEST_CASE("global_attribution") {
  SECTION("all-zero matrices give a zero vector") {
    AttributionMatrix a;
    a.phi = Matrix(4, model::kFeatDim, 0.0);
    auto i = global_attribution({a});
    for (double v : i) CHECK(v == 0.0);
  }
  SECTION("alternating +-0.5 in feature 0 averages to 0.5") {
    AttributionMatrix a;
    a.phi = Matrix(6, model::kFeatDim, 0.0);
    for (std::size_t t = 0; t < 6; ++t) a.phi(t, 0) = (t % 2 == 0) ? 0.5 : -0.5;
    auto i = global_attribution({a});
    CHECK(i[0] == Catch::Approx(0.5));
    CHECK(i[1] == 0.0);
  }
  SECTION("scaling phi by 2 doubles every I_j") {
    Rng rng(3);
    AttributionMatrix a;
    a.phi = Matrix(5, model::kFeatDim);
    for (double& v : a.phi.data) v = rand_normal(rng);
    AttributionMatrix b = a;
    for (double& v : b.phi.data) v *= 2.0;
    auto ia = global_attribution({a});
    auto ib = global_attribution({b});
    for (std::size_t j = 0; j < model::kFeatDim; ++j)
      CHECK(ib[j] == Catch::Approx(2.0 * ia[j]));
  }
  SECTION("empty input throws") {
    CHECK_THROWS_AS(global_attribution({}), DataError);
  }
}

TEST_CASE("srv construction") {
  SECTION("median and slope formulas") {
    CHECK(srv_median(0.2, 0.4) == Catch::Approx(0.3));
    std::array<double, model::kFeatDim> med{0.5, 0.3, 0.2, 0.2, 0.1};
    auto s = srv_slopes(med);
    CHECK(s[0] == Catch::Approx(-0.2));
    CHECK(s[1] == Catch::Approx(-0.1));
    CHECK(s[3] == Catch::Approx(-0.1));
  }
  model::GruModel m = trained_model();
  auto bg = background_windows(16, 4);
  std::map<int, std::vector<dsp::FeatureSequence>> nominal;
  for (int cls : {1, 5})
    for (std::uint64_t s = 0; s < 3; ++s)
      nominal[cls].push_back(make_rec(cls, 700 + 50 * static_cast<std::uint64_t>(cls) + s));
  SECTION("ordering and degenerate n=1") {
    Srv srv = compute_srv(nominal, m, bg, 3, 32, 5);
    for (const auto& [cls, e] : srv.per_class)
      for (std::size_t j = 0; j < model::kFeatDim; ++j) {
        CHECK(e.i_min[j] <= e.i_median[j]);
        CHECK(e.i_median[j] <= e.i_max[j]);
      }
    Srv one = compute_srv(nominal, m, bg, 1, 32, 5);
    for (const auto& [cls, e] : one.per_class)
      for (std::size_t j = 0; j < model::kFeatDim; ++j) {
        CHECK(e.i_min[j] == e.i_max[j]);
        CHECK(e.i_median[j] == e.i_min[j]);
      }
  }
  SECTION("too few nominal gestures throw") {
    CHECK_THROWS_AS(compute_srv(nominal, m, bg, 4, 32, 5), DataError);
  }
  SECTION("corpus members produce no deviations against their own envelope") {
    Srv srv = compute_srv(nominal, m, bg, 3, 32, 5);
    auto mats = gesture_attributions(m, nominal[5][1], bg, 5, 32,
                                     derive_seed(5, "srv", 1));
    auto rep = diagnose(global_attribution(mats), srv.per_class[5], 5);
    for (auto d : rep.deviation) CHECK(d == Deviation::InRange);
    CHECK(rep.diagnosis == Diagnosis::Inconclusive);
  }
}

TEST_CASE("diagnose decision rules") {
  SrvEntry srv;
  srv.i_min = {0.4, 0.2, 0.1, 0.05, 0.05};
  srv.i_max = {0.6, 0.4, 0.2, 0.15, 0.15};
  for (std::size_t j = 0; j < model::kFeatDim; ++j)
    srv.i_median[j] = srv_median(srv.i_min[j], srv.i_max[j]);
  srv.slope = srv_slopes(srv.i_median);  // range > doppler: downward slope

  SECTION("doppler above max with range->doppler slope flip means too fast") {
    auto rep = diagnose({0.45, 0.7, 0.15, 0.1, 0.1}, srv, 4);
    CHECK(rep.diagnosis == Diagnosis::TooFast);
    CHECK(rep.deviation[1] == Deviation::AboveMax);
    CHECK_FALSE(rep.slope_flips.empty());
  }
  SECTION("doppler below min means too slow") {
    auto rep = diagnose({0.45, 0.1, 0.15, 0.1, 0.1}, srv, 4);
    CHECK(rep.diagnosis == Diagnosis::TooSlow);
  }
  SECTION("range below min means too far or wrist") {
    auto rep = diagnose({0.2, 0.3, 0.15, 0.1, 0.1}, srv, 4);
    CHECK(rep.diagnosis == Diagnosis::TooFarOrWrist);
  }
  SECTION("everything in range is inconclusive with no deviations") {
    auto rep = diagnose({0.5, 0.3, 0.15, 0.1, 0.1}, srv, 4);
    CHECK(rep.diagnosis == Diagnosis::Inconclusive);
    for (auto d : rep.deviation) CHECK(d == Deviation::InRange);
  }
  SECTION("a non-inconclusive diagnosis always has a deviation") {
    Rng rng(8);
    for (int it = 0; it < 200; ++it) {
      std::array<double, model::kFeatDim> i{};
      for (double& v : i) v = 0.7 * rand_uniform(rng);
      auto rep = diagnose(i, srv, 3);
      if (rep.diagnosis != Diagnosis::Inconclusive) {
        bool any = false;
        for (auto d : rep.deviation) any = any || d != Deviation::InRange;
        CHECK(any);
      }
    }
  }
}

TEST_CASE("render_feedback templates") {
  SrvEntry srv;
  srv.i_min = {0.4, 0.2, 0.1, 0.05, 0.05};
  srv.i_max = {0.6, 0.4, 0.2, 0.15, 0.15};
  for (std::size_t j = 0; j < model::kFeatDim; ++j)
    srv.i_median[j] = srv_median(srv.i_min[j], srv.i_max[j]);
  srv.slope = srv_slopes(srv.i_median);

  auto msg = [&](const std::array<double, model::kFeatDim>& i) {
    auto rep = diagnose(i, srv, 1);
    return render_feedback(rep);
  };
  CHECK(msg({0.45, 0.7, 0.15, 0.1, 0.1}).find("more slowly") != std::string::npos);
  CHECK(msg({0.45, 0.1, 0.15, 0.1, 0.1}).find("more quickly") != std::string::npos);
  CHECK(msg({0.2, 0.3, 0.15, 0.1, 0.1}).find("closer to the radar") != std::string::npos);
  const std::string inc = msg({0.45, 0.3, 0.5, 0.1, 0.1});  // azimuth above max only
  CHECK(inc.find("azimuth above_max") != std::string::npos);
  CHECK(inc.find("slowly") == std::string::npos);
  // intended class name appears in every message
  CHECK(msg({0.45, 0.7, 0.15, 0.1, 0.1}).find("SwipeLeft") != std::string::npos);
  // determinism
  CHECK(msg({0.45, 0.7, 0.15, 0.1, 0.1}) == msg({0.45, 0.7, 0.15, 0.1, 0.1}));
}

TEST_CASE("characterize validates its inputs") {
  model::GruModel m = trained_model();
  auto bg = background_windows(17, 4);
  Srv srv;
  srv.per_class[1] = SrvEntry{};
  CHECK_THROWS_AS(characterize(m, make_rec(1, 40), 0, srv, bg, 8, 1), InputError);
  CHECK_THROWS_AS(characterize(m, make_rec(1, 40), 7, srv, bg, 8, 1), InputError);
  CHECK_THROWS_AS(characterize(m, make_rec(2, 40), 2, srv, bg, 8, 1), InputError);
  auto rep = characterize(m, make_rec(1, 40), 1, srv, bg, 8, 1);
  CHECK(!rep.message.empty());
}
