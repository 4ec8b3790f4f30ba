#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mvr/core/gradcheck.hpp"
#include "mvr/core/rng.hpp"
#include "mvr/core/tape.hpp"

using mvr::GradCheckOptions;
using mvr::Rng;
using mvr::Tape;
using mvr::Tensor;

namespace {

Tensor<double> randn(std::vector<int> shape, uint64_t seed, double stddev = 1.0) {
  Rng rng(seed);
  return Tensor<double>::randn(std::move(shape), rng, stddev);
}

// Deterministic scalarization: dot the value with a fixed random tensor so
// that gradients are non-degenerate (plain sum kills softmax-style outputs).
int scalarize(Tape<double>& t, int id, uint64_t seed = 99) {
  Rng rng(seed);
  Tensor<double> w = Tensor<double>::randn(t.val(id).shape, rng);
  return t.sum(t.mul(id, t.input(std::move(w))));
}

double fd_check(const std::function<int(Tape<double>&)>& build, std::vector<Tensor<double>*> params,
                GradCheckOptions opt = {}) {
  return mvr::grad_check(build, params, opt).max_rel_err;
}

}  // namespace

TEST_CASE("matmul identity and hand-expanded product") {
  Tape<double> t;
  int I = t.input(Tensor<double>({2, 2}, {1, 0, 0, 1}));
  int a = t.input(Tensor<double>({2, 2}, {1, 2, 3, 4}));
  auto out = t.val(t.matmul(I, a)).data;
  CHECK(out == std::vector<double>{1, 2, 3, 4});

  int b = t.input(Tensor<double>({2, 2}, {1, 0, 0, 0}));
  int c = t.input(Tensor<double>({2, 2}, {0, 1, 1, 0}));
  auto out2 = t.val(t.matmul(b, c)).data;
  CHECK(out2 == std::vector<double>{0, 1, 0, 0});
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape<double> t;
  int a = t.input(Tensor<double>::zeros({2, 3}));
  int b = t.input(Tensor<double>::zeros({2, 3}));
  CHECK_THROWS_WITH_AS(t.matmul(a, b), doctest::Contains("[2x3]"), std::invalid_argument);
}

TEST_CASE("matmul gradient matches finite differences") {
  auto a = randn({3, 4}, 1);
  auto b = randn({4, 2}, 2);
  const double err = fd_check(
      [&](Tape<double>& t) { return t.sum(t.matmul(t.leaf(&a), t.leaf(&b))); }, {&a, &b});
  CHECK(err < 1e-6);
}

TEST_CASE("softmax examples") {
  Tape<double> t;
  int z = t.input(Tensor<double>({1, 4}, {0, 0, 0, 0}));
  for (double v : t.val(t.softmax_rows(z)).data) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));

  int big = t.input(Tensor<double>({1, 2}, {1000, 0}));
  auto out = t.val(t.softmax_rows(big)).data;
  CHECK(std::abs(out[0] - 1.0) < 1e-12);
  CHECK(std::abs(out[1]) < 1e-12);

  auto x = randn({1, 8}, 3);
  {
    Tape<double> t2;
    auto sm = t2.val(t2.softmax_rows(t2.leaf(&x))).data;
    double s = 0;
    for (double v : sm) s += v;
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
  const double err =
      fd_check([&](Tape<double>& t2) { return scalarize(t2, t2.softmax_rows(t2.leaf(&x))); }, {&x});
  CHECK(err < 1e-6);
}

TEST_CASE("layernorm examples") {
  auto gain = Tensor<double>::full({4}, 1.0);
  auto bias = Tensor<double>::zeros({4});
  {
    Tape<double> t;
    int x = t.input(Tensor<double>({1, 4}, {3, 3, 3, 3}));
    auto out = t.val(t.layernorm_rows(x, t.leaf(&gain), t.leaf(&bias))).data;
    for (double v : out) CHECK(std::abs(v) < 1e-9);
  }
  {
    Tape<double> t;
    auto g2 = Tensor<double>::full({2}, 1.0);
    auto b2 = Tensor<double>::zeros({2});
    int x = t.input(Tensor<double>({1, 2}, {1, -1}));
    auto out = t.val(t.layernorm_rows(x, t.leaf(&g2), t.leaf(&b2))).data;
    CHECK(out[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(out[1] == doctest::Approx(-1.0).epsilon(1e-6));
  }
  auto x = randn({3, 5}, 4);
  auto g = randn({5}, 5, 0.5);
  auto b = randn({5}, 6, 0.5);
  const double err = fd_check(
      [&](Tape<double>& t) {
        return scalarize(t, t.layernorm_rows(t.leaf(&x), t.leaf(&g), t.leaf(&b)));
      },
      {&x, &g, &b});
  CHECK(err < 1e-5);
}

TEST_CASE("bilinear sampling examples") {
  // 2x2 map, single channel, values row-major {0,1;2,3}.
  auto map = Tensor<double>({1, 4}, {0, 1, 2, 3});
  {
    Tape<double> t;
    int pts = t.input(Tensor<double>({3, 2}, {0, 0, 1, 1, 0.5, 0.5}));
    auto out = t.val(t.bilinear_sample_rows(t.leaf(&map), pts, 2, 2)).data;
    CHECK(out[0] == doctest::Approx(0.0));   // lattice point
    CHECK(out[1] == doctest::Approx(3.0));   // lattice point
    CHECK(out[2] == doctest::Approx(1.5));   // midpoint = corner average
  }
  {
    Tape<double> t;
    int pts = t.input(Tensor<double>({1, 2}, {-5, -5}));
    auto out = t.val(t.bilinear_sample_rows(t.leaf(&map), pts, 2, 2)).data;
    CHECK(out[0] == doctest::Approx(0.0));  // clamped to (0, 0)
  }
  // Differentiable w.r.t. both the map and the sample point.
  auto m = randn({2, 16}, 7);
  auto pts = Tensor<double>({2, 2}, {1.3, 2.4, 0.6, 1.7});
  const double err = fd_check(
      [&](Tape<double>& t) {
        return scalarize(t, t.bilinear_sample_rows(t.leaf(&m), t.leaf(&pts), 4, 4));
      },
      {&m, &pts});
  CHECK(err < 1e-6);
}

TEST_CASE("grad_check harness: exact on linear, loud on corruption") {
  auto x = randn({4}, 8);
  auto build = [&](Tape<double>& t) {
    int c = t.input(Tensor<double>({4}, {2.0, -1.5, 3.0, 0.5}));
    return t.sum(t.mul(t.leaf(&x), c));
  };
  CHECK(mvr::grad_check(build, {&x}).max_rel_err < 1e-10);

  GradCheckOptions opt;
  opt.analytic_hook = [](size_t, size_t e, double g) { return e == 0 ? 1.7 * g + 0.3 : g; };
  CHECK(mvr::grad_check(build, {&x}, opt).max_rel_err > 1e-1);
}

TEST_CASE("finite differences across remaining primitives") {
  auto a = randn({3, 4}, 10);
  auto b = randn({3, 4}, 11);
  auto v = randn({4}, 12);
  auto off = randn({3, 4}, 13);
  for (auto& x : off.data) x += (x >= 0 ? 1.5 : -1.5);  // keep abs/log away from kinks

  auto cases = std::vector<std::pair<const char*, std::function<int(Tape<double>&)>>>{
      {"add", [&](Tape<double>& t) { return scalarize(t, t.add(t.leaf(&a), t.leaf(&b))); }},
      {"sub", [&](Tape<double>& t) { return scalarize(t, t.sub(t.leaf(&a), t.leaf(&b))); }},
      {"mul", [&](Tape<double>& t) { return scalarize(t, t.mul(t.leaf(&a), t.leaf(&b))); }},
      {"scale", [&](Tape<double>& t) { return scalarize(t, t.scale(t.leaf(&a), -2.5)); }},
      {"add_rowvec", [&](Tape<double>& t) { return scalarize(t, t.add_rowvec(t.leaf(&a), t.leaf(&v))); }},
      {"mul_rowvec", [&](Tape<double>& t) { return scalarize(t, t.mul_rowvec(t.leaf(&a), t.leaf(&v))); }},
      {"gelu", [&](Tape<double>& t) { return scalarize(t, t.gelu(t.leaf(&a))); }},
      {"exp", [&](Tape<double>& t) { return scalarize(t, t.exp(t.leaf(&a))); }},
      {"sigmoid", [&](Tape<double>& t) { return scalarize(t, t.sigmoid(t.leaf(&a))); }},
      {"abs", [&](Tape<double>& t) { return scalarize(t, t.abs(t.leaf(&off))); }},
      {"transpose", [&](Tape<double>& t) { return scalarize(t, t.transpose(t.leaf(&a))); }},
      {"reshape", [&](Tape<double>& t) { return scalarize(t, t.reshape(t.leaf(&a), {4, 3})); }},
      {"slice_rows", [&](Tape<double>& t) { return scalarize(t, t.slice_rows(t.leaf(&a), 1, 2)); }},
      {"slice_cols", [&](Tape<double>& t) { return scalarize(t, t.slice_cols(t.leaf(&a), 1, 3)); }},
      {"select_rows",
       [&](Tape<double>& t) { return scalarize(t, t.select_rows(t.leaf(&a), {2, 0, 2})); }},
      {"concat_rows",
       [&](Tape<double>& t) { return scalarize(t, t.concat_rows({t.leaf(&a), t.leaf(&b)})); }},
      {"concat_cols",
       [&](Tape<double>& t) { return scalarize(t, t.concat_cols({t.leaf(&a), t.leaf(&b)})); }},
      {"normalize_rows", [&](Tape<double>& t) { return scalarize(t, t.normalize_rows(t.leaf(&off))); }},
      {"huber", [&](Tape<double>& t) { return t.huber_sum(t.leaf(&a), 0.7); }},
      {"mean", [&](Tape<double>& t) { return t.mean(t.leaf(&a)); }},
  };
  for (auto& [name, build] : cases) {
    INFO(name);
    CHECK(fd_check(build, {&a, &b, &v, &off}) < 1e-5);
  }

  auto one_row = randn({1, 4}, 14);
  CHECK(fd_check([&](Tape<double>& t) { return scalarize(t, t.repeat_rows(t.leaf(&one_row), 5)); },
                 {&one_row}) < 1e-6);

  auto pos = randn({2, 6}, 15);
  for (auto& x : pos.data) x = std::abs(x) + 0.5;
  CHECK(fd_check([&](Tape<double>& t) { return scalarize(t, t.log(t.leaf(&pos))); }, {&pos}) < 1e-6);
  CHECK(fd_check([&](Tape<double>& t) { return scalarize(t, t.sqrt_guard(t.leaf(&pos))); }, {&pos}) <
        1e-6);

  auto logits = randn({6, 1}, 16);
  auto labels = Tensor<double>({6, 1}, {1, 0, 1, 1, 0, 1});
  CHECK(fd_check(
            [&](Tape<double>& t) { return t.bce_logits_mean(t.leaf(&logits), t.input(labels)); },
            {&logits}) < 1e-6);
}

TEST_CASE("finite differences: conv3x3, resize, spatial_gradient") {
  auto x = randn({2, 5 * 4}, 20);
  auto w = randn({3, 2 * 9}, 21, 0.5);
  auto b = randn({3}, 22, 0.1);
  CHECK(fd_check(
            [&](Tape<double>& t) {
              return scalarize(t, t.conv3x3(t.leaf(&x), t.leaf(&w), t.leaf(&b), 5, 4));
            },
            {&x, &w, &b}) < 1e-5);

  CHECK(fd_check([&](Tape<double>& t) { return scalarize(t, t.resize_bilinear(t.leaf(&x), 5, 4, 9, 7)); },
                 {&x}) < 1e-5);
  CHECK(fd_check([&](Tape<double>& t) { return scalarize(t, t.resize_bilinear(t.leaf(&x), 5, 4, 3, 2)); },
                 {&x}) < 1e-5);
  CHECK(fd_check([&](Tape<double>& t) { return scalarize(t, t.spatial_gradient(t.leaf(&x), 5, 4)); },
                 {&x}) < 1e-5);
}

TEST_CASE("huber closed-form branch values") {
  Tape<double> t;
  CHECK(t.val(t.huber_sum(t.input(Tensor<double>({1}, {0.0})), 1.0)).data[0] == doctest::Approx(0.0));
  CHECK(t.val(t.huber_sum(t.input(Tensor<double>({1}, {0.5})), 1.0)).data[0] ==
        doctest::Approx(0.125));
  CHECK(t.val(t.huber_sum(t.input(Tensor<double>({1}, {2.0})), 1.0)).data[0] == doctest::Approx(1.5));
}

TEST_CASE("tape replay accumulates exactly twice the gradient") {
  auto a = randn({3, 3}, 30);
  a.requires_grad = true;
  a.zero_grad();
  Tape<double> t;
  int out = t.sum(t.mul(t.leaf(&a), t.leaf(&a)));
  t.backward(out);
  const auto g1 = a.grad;
  t.backward(out);
  for (size_t i = 0; i < g1.size(); ++i) CHECK(a.grad[i] == 2.0 * g1[i]);
}

TEST_CASE("forward passes are bit-deterministic") {
  auto run = [] {
    Rng rng(1234);
    auto a = Tensor<double>::randn({8, 8}, rng);
    auto b = Tensor<double>::randn({8, 8}, rng);
    Tape<double> t;
    int z = t.softmax_rows(t.matmul(t.leaf(&a), t.gelu(t.leaf(&b))));
    return t.val(z).data;
  };
  CHECK(run() == run());
}
