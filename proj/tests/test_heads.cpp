#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>

#include "mvr/core/gradcheck.hpp"
#include "mvr/model/model.hpp"

using namespace mvr;

namespace {

ModelConfig micro_config() {
  ModelConfig cfg;
  cfg.depth = 2;
  cfg.dim = 16;
  cfg.heads = 2;
  cfg.patch = 14;
  cfg.track_dim = 4;
  cfg.dense_dim = 8;
  cfg.track_attn_dim = 16;
  return cfg;
}

std::vector<float> random_images(int N, int H, int W, uint64_t seed) {
  Rng rng(seed);
  std::vector<float> img(static_cast<size_t>(N) * 3 * H * W);
  for (auto& x : img) x = static_cast<float>(rng.uniform());
  return img;
}

}  // namespace

TEST_CASE("camera head pins frame 1 to the identity and renormalizes quaternions") {
  Model<float> m(micro_config());
  for (uint64_t seed : {1u, 2u, 3u}) {
    m.init(seed);
    for (int N : {1, 4}) {
      const auto img = random_images(N, 28, 28, seed * 10 + N);
      Tape<float> tape;
      const auto fo = m.forward(tape, img.data(), N, 28, 28, {});
      const auto& cam = tape.val(fo.camera);
      REQUIRE(cam.shape == std::vector<int>{N, 9});
      CHECK(cam.data[0] == 0.0f);
      CHECK(cam.data[1] == 0.0f);
      CHECK(cam.data[2] == 0.0f);
      CHECK(cam.data[3] == 1.0f);
      CHECK(cam.data[4] == 0.0f);
      CHECK(cam.data[5] == 0.0f);
      CHECK(cam.data[6] == 0.0f);
      for (int f = 0; f < N; ++f) {
        double qn = 0;
        for (int i = 0; i < 4; ++i) qn += static_cast<double>(cam.data[f * 9 + i]) * cam.data[f * 9 + i];
        CHECK(std::abs(std::sqrt(qn) - 1.0) < 1e-6);
        CHECK(cam.data[f * 9 + 7] > 0.0f);
        CHECK(cam.data[f * 9 + 7] < static_cast<float>(M_PI));
        CHECK(cam.data[f * 9 + 8] > 0.0f);
        CHECK(cam.data[f * 9 + 8] < static_cast<float>(M_PI));
      }
    }
  }
}

TEST_CASE("dense head: shape contract, zero-weight activations, sigma floor") {
  Model<float> m(micro_config());
  m.init(5);
  const int N = 2, H = 28, W = 42;
  const auto img = random_images(N, H, W, 6);
  {
    Tape<float> tape;
    const auto fo = m.forward(tape, img.data(), N, H, W, {});
    const int K = m.tokens_per_frame(H, W);
    CHECK(K == 6);
    for (int f = 0; f < N; ++f) {
      CHECK(tape.val(fo.dense.depth[f]).shape == std::vector<int>{1, H * W});
      CHECK(tape.val(fo.dense.pmap[f]).shape == std::vector<int>{3, H * W});
      CHECK(tape.val(fo.dense.tfeat[f]).shape == std::vector<int>{4, H * W});
      // sigma outputs strictly positive with the configured floor
      for (float s : tape.val(fo.dense.sigma_d[f]).data) CHECK(s >= 1e-3f);
      for (float s : tape.val(fo.dense.sigma_p[f]).data) CHECK(s > 0.0f);
      for (float d : tape.val(fo.dense.depth[f]).data) CHECK(d > 0.0f);
    }
  }
  // all-zero final layers: sigma == 1 and depth == 1 everywhere
  for (const char* nm : {"dpt.out.depth", "dpt.out.sigd", "dpt.out.sigp"}) {
    for (auto& x : m.params().get(std::string(nm) + ".w").data) x = 0;
    for (auto& x : m.params().get(std::string(nm) + ".b").data) x = 0;
  }
  {
    Tape<float> tape;
    const auto fo = m.forward(tape, img.data(), N, H, W, {});
    for (float d : tape.val(fo.dense.depth[0]).data) CHECK(d == 1.0f);
    for (float s : tape.val(fo.dense.sigma_d[0]).data) CHECK(s == 1.0f);
    for (float s : tape.val(fo.dense.sigma_p[0]).data) CHECK(s == 1.0f);
  }
  // snapshot count contract
  {
    Tape<float> tape;
    auto ctx = m.make_ctx(tape);
    std::array<int, 4> bad{0, 1, 2, -1};
    CHECK_THROWS_AS(m.dense_head(ctx, bad, 1, 4, 28, 28), std::invalid_argument);
  }
}

TEST_CASE("dense head gradients match finite differences through the backbone") {
  ModelConfig cfg = micro_config();
  Model<double> m(cfg);
  m.init(7);
  const auto img = random_images(1, 28, 28, 8);
  auto build = [&](Tape<double>& tape) {
    const auto fo = m.forward(tape, img.data(), 1, 28, 28, {});
    Rng rng(42);
    int acc = -1;
    for (int id : {fo.dense.depth[0], fo.dense.pmap[0], fo.dense.sigma_d[0]}) {
      Tensor<double> w = Tensor<double>::randn(tape.val(id).shape, rng);
      const int s = tape.sum(tape.mul(id, tape.input(std::move(w))));
      acc = acc < 0 ? s : tape.add(acc, s);
    }
    return acc;
  };
  std::vector<Tensor<double>*> params;
  for (const char* nm : {"patch.w", "blk0.gl.wq", "blk1.fw.mlp.w1", "dpt.proj2.w", "dpt.fuse1.w",
                         "dpt.out.depth.w", "dpt.out.pmap.b"})
    params.push_back(&m.params().get(nm));
  GradCheckOptions opt;
  opt.max_elems_per_tensor = 6;
  // FD roundoff is ~3e-10 absolute here (f ~ 30, step 1e-5); the floor keeps
  // near-zero gradients from turning that noise into spurious relative error.
  opt.abs_floor = 1e-4;
  const auto res = grad_check(build, params, opt);
  CHECK(res.max_rel_err < 1e-3);
}

TEST_CASE("tracking head: uniform features give the map centroid") {
  Model<float> m(micro_config());
  m.init(9);
  const int H = 12, W = 16, C = 4;
  Tape<float> tape;
  auto ctx = m.make_ctx(tape);
  std::vector<int> tfeat;
  for (int f = 0; f < 3; ++f) tfeat.push_back(tape.input(Tensor<float>::full({C, H * W}, 0.5f)));
  const auto out = m.tracking_head(ctx, tfeat, {{4.0, 7.0}}, H, W);
  for (int f = 0; f < 3; ++f) {
    const auto& init = tape.val(out.init[f]);
    CHECK(init.data[0] == doctest::Approx((W - 1) / 2.0).epsilon(1e-5));
    CHECK(init.data[1] == doctest::Approx((H - 1) / 2.0).epsilon(1e-5));
  }
}

TEST_CASE("tracking head: a one-hot feature match localizes within half a pixel") {
  Model<float> m(micro_config());
  m.init(10);
  const int H = 20, W = 24, C = 4;
  // orthogonal features: the query pixel's vector appears at exactly one
  // target location, zero dot-product elsewhere
  Tensor<float> fq = Tensor<float>::zeros({C, H * W});
  Tensor<float> ft = Tensor<float>::zeros({C, H * W});
  const int qx = 5, qy = 6, tx = 17, ty = 11;
  // scale 7 -> peak logit 7*7*C/sqrt(C) = 98, e^98 dwarfs the uniform mass
  for (int c = 0; c < C; ++c) {
    fq.data[c * H * W + qy * W + qx] = 7.0f;
    ft.data[c * H * W + ty * W + tx] = 7.0f;
  }
  Tape<float> tape;
  auto ctx = m.make_ctx(tape);
  const auto out = m.tracking_head(ctx, {tape.input(fq), tape.input(ft)}, {{qx * 1.0, qy * 1.0}}, H, W);
  const auto& i1 = tape.val(out.init[1]);
  CHECK(std::abs(i1.data[0] - tx) < 0.5);
  CHECK(std::abs(i1.data[1] - ty) < 0.5);
}

TEST_CASE("tracking head: shape contract and bounds check") {
  Model<float> m(micro_config());
  m.init(11);
  const int H = 14, W = 14, N = 5, M = 3;
  Tape<float> tape;
  auto ctx = m.make_ctx(tape);
  Rng rng(12);
  std::vector<int> tfeat;
  for (int f = 0; f < N; ++f)
    tfeat.push_back(tape.input(Tensor<float>::randn({4, H * W}, rng)));
  const auto out =
      m.tracking_head(ctx, tfeat, {{1.0, 2.0}, {3.5, 4.5}, {13.0, 13.0}}, H, W);
  CHECK(tape.val(out.pos).shape == std::vector<int>{M * N, 2});
  CHECK(tape.val(out.vis).shape == std::vector<int>{M * N, 1});
  for (float x : tape.val(out.pos).data) CHECK(std::isfinite(x));

  Tape<float> t2;
  auto c2 = m.make_ctx(t2);
  std::vector<int> tf2{t2.input(Tensor<float>::zeros({4, H * W}))};
  CHECK_THROWS_AS(m.tracking_head(c2, tf2, {{-1.0, 3.0}}, H, W), std::invalid_argument);
}

TEST_CASE("tracking head is consistent under integer translations") {
  Model<float> m(micro_config());
  m.init(13);
  const int H = 24, W = 24, C = 4, N = 3;
  Rng rng(14);
  // base maps: weak noise plus a strong localized marker per frame
  std::vector<Tensor<float>> base;
  std::vector<std::pair<int, int>> markers{{6, 7}, {9, 11}, {12, 8}};
  for (int f = 0; f < N; ++f) {
    Tensor<float> t = Tensor<float>::randn({C, H * W}, rng, 0.05f);
    for (int c = 0; c < C; ++c)
      t.data[c * H * W + markers[f].second * W + markers[f].first] = 8.0f + c;
    base.push_back(std::move(t));
  }
  // the query sits on frame 0's marker
  const std::vector<std::array<double, 2>> queries{{6.0, 7.0}};

  auto run = [&](int dx, int dy) {
    Tape<float> tape;
    auto ctx = m.make_ctx(tape);
    std::vector<int> ids;
    for (int f = 0; f < N; ++f) {
      if (f == 0) {
        ids.push_back(tape.input(base[f]));
        continue;
      }
      Tensor<float> shifted = Tensor<float>::zeros({C, H * W});
      for (int c = 0; c < C; ++c)
        for (int i = 0; i < H; ++i)
          for (int j = 0; j < W; ++j) {
            const int si = i - dy, sj = j - dx;
            if (si >= 0 && si < H && sj >= 0 && sj < W)
              shifted.data[c * H * W + i * W + j] = base[f].data[c * H * W + si * W + sj];
          }
      ids.push_back(tape.input(std::move(shifted)));
    }
    const auto out = m.tracking_head(ctx, ids, queries, H, W);
    return tape.val(out.pos).data;
  };

  const auto p0 = run(0, 0);
  const auto p1 = run(3, -2);
  for (int f = 1; f < N; ++f) {
    CHECK(std::abs((p1[f * 2] - p0[f * 2]) - 3.0) < 0.5);
    CHECK(std::abs((p1[f * 2 + 1] - p0[f * 2 + 1]) - (-2.0)) < 0.5);
  }
}

TEST_CASE("full forward is deterministic and fast enough on the toy config") {
  ModelConfig cfg;  // toy defaults: dim 64, L = 4
  Model<float> m(cfg);
  m.init(15);
  const int N = 8, H = 56, W = 56;
  const auto img = random_images(N, H, W, 16);
  const std::vector<std::array<double, 2>> queries{{10.0, 10.0}, {30.0, 40.0}};

  const auto t0 = std::chrono::steady_clock::now();
  Tape<float> tape;
  const auto fo = m.forward(tape, img.data(), N, H, W, queries);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  MESSAGE("N=8 toy forward: ", secs, " s");
  CHECK(secs < 10.0);  // desk-machine measurement ~0.5 s; generous CI margin

  Tape<float> tape2;
  const auto fo2 = m.forward(tape2, img.data(), N, H, W, queries);
  CHECK(tape.val(fo.camera).data == tape2.val(fo2.camera).data);
  CHECK(tape.val(fo.dense.depth[3]).data == tape2.val(fo2.dense.depth[3]).data);
  CHECK(tape.val(fo.track.pos).data == tape2.val(fo2.track.pos).data);
}
