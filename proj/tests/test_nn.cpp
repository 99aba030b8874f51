#include <catch2/catch_amalgamated.hpp>

#include "gradcheck.hpp"
#include "rhgr/nn/gru.hpp"
#include "rhgr/nn/layers.hpp"

using namespace rhgr;
using namespace rhgr::nn;

TEST_CASE("dense_forward basics") {
  DenseParams p(2, 2);
  p.w(0, 0) = 1.0;
  p.w(1, 1) = 1.0;
  CHECK(dense_forward(Vec{1.0, 0.0}, p) == Vec{1.0, 0.0});

  DenseParams q(2, 2);
  q.w(0, 0) = 1.0;
  q.w(0, 1) = 1.0;
  q.w(1, 0) = 1.0;
  q.w(1, 1) = -1.0;
  q.b(0, 0) = 0.5;
  q.b(0, 1) = 0.5;
  Vec y = dense_forward(Vec{1.0, 2.0}, q);
  CHECK(y[0] == Catch::Approx(3.5));
  CHECK(y[1] == Catch::Approx(-0.5));

  // zero input returns the bias
  Vec z = dense_forward(Vec{0.0, 0.0}, q);
  CHECK(z[0] == Catch::Approx(0.5));
  CHECK(z[1] == Catch::Approx(0.5));

  CHECK_THROWS_AS(dense_forward(Vec{1.0}, q), ShapeError);
}

TEST_CASE("gru_step zero-parameter cases") {
  GruParams p(5, 16);
  Vec x(5, 0.0), h0(16, 0.0);
  Vec h1 = gru_step(x, h0, p);
  for (double v : h1) CHECK(v == Catch::Approx(0.0));

  Vec hv(16);
  for (std::size_t i = 0; i < 16; ++i) hv[i] = 0.1 * static_cast<double>(i) - 0.5;
  Vec h2 = gru_step(x, hv, p);
  for (std::size_t i = 0; i < 16; ++i) CHECK(h2[i] == Catch::Approx(0.5 * hv[i]));

  Vec bad = x;
  bad[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(gru_step(bad, h0, p), NumericError);
}

// Independent scalar recomputation of one GRU step.
static Vec gru_step_scalar_oracle(const Vec& x, const Vec& h, const GruParams& p) {
  auto dot_in = [&](const Matrix& w, std::size_t j) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * w(i, j);
    return s;
  };
  auto dot_h = [&](const Matrix& u, const Vec& hv, std::size_t j) {
    double s = 0.0;
    for (std::size_t i = 0; i < hv.size(); ++i) s += hv[i] * u(i, j);
    return s;
  };
  Vec out(h.size());
  Vec rh(h.size());
  Vec z(h.size()), r(h.size());
  for (std::size_t j = 0; j < h.size(); ++j) {
    z[j] = 1.0 / (1.0 + std::exp(-(dot_in(p.wz, j) + dot_h(p.uz, h, j) + p.bz(0, j))));
    r[j] = 1.0 / (1.0 + std::exp(-(dot_in(p.wr, j) + dot_h(p.ur, h, j) + p.br(0, j))));
  }
  for (std::size_t j = 0; j < h.size(); ++j) rh[j] = r[j] * h[j];
  for (std::size_t j = 0; j < h.size(); ++j) {
    const double ht = std::tanh(dot_in(p.wh, j) + dot_h(p.uh, rh, j) + p.bh(0, j));
    out[j] = (1.0 - z[j]) * h[j] + z[j] * ht;
  }
  return out;
}

TEST_CASE("gru_step matches scalar oracle on random params") {
  Rng rng(1234);
  GruParams p(5, 16);
  p.init(rng);
  for (Matrix* b : {&p.bz, &p.br, &p.bh})
    for (double& v : b->data) v = 0.2 * rand_normal(rng);
  Vec x(5), h(16);
  for (double& v : x) v = rand_normal(rng);
  for (double& v : h) v = 0.5 * std::tanh(rand_normal(rng));
  Vec got = gru_step(x, h, p);
  Vec want = gru_step_scalar_oracle(x, h, p);
  for (std::size_t j = 0; j < 16; ++j) CHECK(got[j] == Catch::Approx(want[j]).margin(1e-12));
}

TEST_CASE("gru hidden state stays bounded from zero init") {
  Rng rng(7);
  GruParams p(5, 16);
  p.init(rng);
  Vec h(16, 0.0);
  for (int t = 0; t < 200; ++t) {
    Vec x(5);
    for (double& v : x) v = 3.0 * rand_normal(rng);
    h = gru_step(x, h, p);
    for (double v : h) {
      CHECK(v > -1.0);
      CHECK(v < 1.0);
    }
  }
}

TEST_CASE("softmax") {
  Vec u = softmax(Vec{0.0, 0.0, 0.0});
  for (double v : u) CHECK(v == Catch::Approx(1.0 / 3.0));

  Vec a = softmax(Vec{1.0, 2.0, 3.0});
  CHECK(a[0] == Catch::Approx(0.09003).margin(1e-5));
  CHECK(a[1] == Catch::Approx(0.24473).margin(1e-5));
  CHECK(a[2] == Catch::Approx(0.66524).margin(1e-5));

  SECTION("sums to one and is shift invariant") {
    Rng rng(5);
    for (int it = 0; it < 50; ++it) {
      Vec logits(6);
      for (double& v : logits) v = 10.0 * rand_normal(rng);
      Vec s1 = softmax(logits);
      double sum = 0.0;
      for (double v : s1) sum += v;
      CHECK(sum == Catch::Approx(1.0).margin(1e-9));
      const double c = 100.0 * rand_normal(rng);
      Vec shifted = logits;
      for (double& v : shifted) v += c;
      Vec s2 = softmax(shifted);
      for (std::size_t i = 0; i < s1.size(); ++i)
        CHECK(s1[i] == Catch::Approx(s2[i]).margin(1e-9));
    }
  }
}

TEST_CASE("batchnorm forward") {
  BatchNormParams p(2);
  SECTION("constant batch maps to beta") {
    Matrix x(4, 2, 3.0);
    p.beta = {0.5, -0.5};
    Matrix y = batchnorm_forward(x, p, Mode::Train);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(y(i, 0) == Catch::Approx(0.5).margin(1e-6));
      CHECK(y(i, 1) == Catch::Approx(-0.5).margin(1e-6));
    }
  }
  SECTION("unit-variance batch is nearly unchanged") {
    Matrix x(2, 2);
    x(0, 0) = -1.0; x(0, 1) = 1.0;
    x(1, 0) = 1.0;  x(1, 1) = -1.0;
    Matrix y = batchnorm_forward(x, p, Mode::Train);
    CHECK(y(0, 0) == Catch::Approx(-1.0).margin(1e-3));
    CHECK(y(1, 0) == Catch::Approx(1.0).margin(1e-3));
  }
  SECTION("infer mode with unit running stats is identity") {
    Matrix x(3, 2);
    Rng rng(2);
    for (double& v : x.data) v = rand_normal(rng);
    Matrix y = batchnorm_forward(x, p, Mode::Infer);
    for (std::size_t k = 0; k < x.data.size(); ++k)
      CHECK(y.data[k] == Catch::Approx(x.data[k]).margin(1e-5));
  }
  SECTION("empty batch in train mode throws") {
    Matrix x(0, 2);
    CHECK_THROWS_AS(batchnorm_forward(x, p, Mode::Train), BatchError);
  }
}

TEST_CASE("dropout") {
  Matrix x(100, 10, 1.0);
  CHECK(dropout_apply(x, 0.0, 1, Mode::Train).data == x.data);
  CHECK(dropout_apply(x, 0.7, 1, Mode::Infer).data == x.data);
  CHECK_THROWS_AS(dropout_apply(x, 1.0, 1, Mode::Train), ConfigError);

  SECTION("empirical zero fraction near the rate") {
    Matrix big(1000, 100, 1.0);
    Matrix y = dropout_apply(big, 0.3, 42, Mode::Train);
    std::size_t zeros = 0;
    for (double v : y.data)
      if (v == 0.0) ++zeros;
    const double frac = static_cast<double>(zeros) / static_cast<double>(y.data.size());
    CHECK(frac == Catch::Approx(0.3).margin(0.01));
  }
  SECTION("inverted dropout preserves expectation") {
    double mean = 0.0;
    for (std::uint64_t s = 0; s < 200; ++s) {
      Matrix y = dropout_apply(x, 0.3, 1000 + s, Mode::Train);
      for (double v : y.data) mean += v;
    }
    mean /= 200.0 * static_cast<double>(x.data.size());
    CHECK(mean == Catch::Approx(1.0).margin(0.02));
  }
}

TEST_CASE("sparse cross entropy") {
  CHECK(sparse_ce_loss(Vec{0.0, 1.0, 0.0}, 1) == Catch::Approx(0.0));
  Vec u(6, 1.0 / 6.0);
  CHECK(sparse_ce_loss(u, 3) == Catch::Approx(std::log(6.0)).margin(1e-9));
  CHECK(sparse_ce_loss(Vec{0.0, 1.0}, 0) == Catch::Approx(-std::log(1e-12)));
  CHECK_THROWS_AS(sparse_ce_loss(u, 6), LabelError);
}

TEST_CASE("adam") {
  SECTION("zero grad leaves params unchanged") {
    Matrix p(3, 3, 1.0);
    ParamRefs refs{&p};
    AdamState st;
    adam_step(refs, zeros_like(refs), st);
    for (double v : p.data) CHECK(v == Catch::Approx(1.0));
  }
  SECTION("one-step closed form for a constant scalar gradient") {
    Matrix p(1, 1, 0.0);
    ParamRefs refs{&p};
    AdamState st;
    st.lr = 0.1;
    GradientSet g = zeros_like(refs);
    g[0](0, 0) = 1.0;
    adam_step(refs, g, st);
    // bias-corrected m^/sqrt(v^) = 1 at t=1
    CHECK(p(0, 0) == Catch::Approx(-0.1).margin(1e-6));
    CHECK(st.t == 1);
  }
  SECTION("deterministic across identical runs") {
    auto run = [] {
      Rng rng(9);
      Matrix p(4, 4);
      for (double& v : p.data) v = rand_normal(rng);
      ParamRefs refs{&p};
      AdamState st;
      for (int i = 0; i < 10; ++i) {
        GradientSet g = zeros_like(refs);
        for (double& v : g[0].data) v = rand_normal(rng);
        adam_step(refs, g, st);
      }
      return p.data;
    };
    CHECK(run() == run());
  }
}

TEST_CASE("reparameterize") {
  Vec mu{1.0, -2.0}, lv{0.0, 0.0}, n0{0.0, 0.0};
  CHECK(reparameterize(mu, lv, n0) == mu);
  Vec n1{0.5, -0.5};
  Vec z = reparameterize(mu, lv, n1);
  CHECK(z[0] == Catch::Approx(1.5));
  CHECK(z[1] == Catch::Approx(-2.5));
  Vec z2 = reparameterize(Vec{0.0}, Vec{std::log(4.0)}, Vec{1.0});
  CHECK(z2[0] == Catch::Approx(2.0));
  CHECK_THROWS_AS(reparameterize(mu, lv, Vec{1.0}), ShapeError);
}

TEST_CASE("GRU + dense gradients match finite differences") {
  Rng rng(77);
  GruParams gp(5, 8);
  gp.init(rng);
  DenseParams dp(8, 6);
  dp.init(rng);
  for (double& v : dp.b.data) v = 0.1 * rand_normal(rng);

  const std::size_t batch = 3, len = 6;
  std::vector<Matrix> x(len);
  for (auto& xt : x) {
    xt = Matrix(batch, 5);
    for (double& v : xt.data) v = rand_normal(rng);
  }
  std::vector<std::size_t> labels{1, 4, 0};

  auto loss_fn = [&] {
    Matrix h = gru_forward_batch(x, gp);
    Matrix logits = dense_forward(h, dp);
    double loss = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
      Vec row(logits.cols);
      for (std::size_t j = 0; j < logits.cols; ++j) row[j] = logits(i, j);
      loss += sparse_ce_loss(softmax(row), labels[i]);
    }
    return loss / static_cast<double>(batch);
  };

  // analytic pass
  std::vector<GruStepCache> cache;
  Matrix h = gru_forward_batch(x, gp, &cache);
  Matrix logits = dense_forward(h, dp);
  Matrix dlogits(batch, 6);
  for (std::size_t i = 0; i < batch; ++i) {
    Vec row(6);
    for (std::size_t j = 0; j < 6; ++j) row[j] = logits(i, j);
    Vec probs = softmax(row);
    for (std::size_t j = 0; j < 6; ++j)
      dlogits(i, j) = (probs[j] - (j == labels[i] ? 1.0 : 0.0)) / static_cast<double>(batch);
  }
  Matrix dw(8, 6), db(1, 6);
  Matrix dh = dense_backward(h, dp, dlogits, dw, db);
  GruGrads gg(gp);
  std::vector<Matrix> dx;
  gru_backward_batch(x, gp, cache, dh, gg, &dx);

  GradientSet analytic;
  gg.append_to(analytic);
  analytic.push_back(dw);
  analytic.push_back(db);
  ParamRefs refs = gp.param_refs();
  refs.push_back(&dp.w);
  refs.push_back(&dp.b);

  auto res = test::finite_diff_check(refs, analytic, loss_fn);
  INFO("checked " << res.checked << " params, max rel err " << res.max_rel_err);
  CHECK(res.max_rel_err < 1e-4);

  SECTION("input gradients match finite differences too") {
    for (std::size_t t : {std::size_t{0}, len - 1}) {
      for (std::size_t k = 0; k < x[t].data.size(); k += 3) {
        const double orig = x[t].data[k];
        const double hstep = 1e-5;
        x[t].data[k] = orig + hstep;
        const double lp = loss_fn();
        x[t].data[k] = orig - hstep;
        const double lm = loss_fn();
        x[t].data[k] = orig;
        const double fd = (lp - lm) / (2.0 * hstep);
        CHECK(dx[t].data[k] == Catch::Approx(fd).margin(1e-5));
      }
    }
  }
}

TEST_CASE("closed-form dense bias gradient at uniform output") {
  // zero-weight model, CE loss: dL/d(bias) = probs - onehot
  DenseParams dp(8, 6);
  Matrix h(1, 8, 0.3);
  Matrix logits = dense_forward(h, dp);
  Vec row(6);
  for (std::size_t j = 0; j < 6; ++j) row[j] = logits(0, j);
  Vec probs = softmax(row);
  Matrix dlogits(1, 6);
  for (std::size_t j = 0; j < 6; ++j) dlogits(0, j) = probs[j] - (j == 2 ? 1.0 : 0.0);
  Matrix dw(8, 6), db(1, 6);
  dense_backward(h, dp, dlogits, dw, db);
  for (std::size_t j = 0; j < 6; ++j)
    CHECK(db(0, j) == Catch::Approx(1.0 / 6.0 - (j == 2 ? 1.0 : 0.0)).margin(1e-12));
}
