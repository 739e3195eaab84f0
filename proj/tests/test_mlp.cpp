#include "romo/mlp.hpp"

#include "romo/errors.hpp"
#include "romo/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace romo;

namespace {

Mlp linear_net(const Vec& w, double b) {
  const int d = static_cast<int>(w.size());
  Mat w0(1, d);
  w0.row(0) = w.transpose();
  return Mlp({d, 1}, {w0}, {Vec::Constant(1, b)});
}

Mlp random_net(const std::vector<int>& dims, std::uint64_t seed) {
  CounterRng rng(seed, 0);
  return Mlp(dims, rng);
}

Vec random_vec(int n, CounterRng& rng, double lo = -1.5, double hi = 1.5) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.next_uniform(lo, hi);
  return v;
}

Mat random_mat(int n, int d, CounterRng& rng) {
  Mat m(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = rng.next_uniform(-1.5, 1.5);
  return m;
}

// Forward pass re-derived with plain loops.
double forward_reference(const Mlp& net, const Vec& input) {
  std::vector<double> act(input.data(), input.data() + input.size());
  const int layers = net.n_layers();
  for (int l = 0; l < layers; ++l) {
    const Mat& w = net.weights()[static_cast<std::size_t>(l)];
    const Vec& b = net.biases()[static_cast<std::size_t>(l)];
    std::vector<double> next(static_cast<std::size_t>(w.rows()));
    for (int i = 0; i < w.rows(); ++i) {
      double z = b[i];
      for (int j = 0; j < w.cols(); ++j) z += w(i, j) * act[static_cast<std::size_t>(j)];
      next[static_cast<std::size_t>(i)] = l + 1 < layers ? std::tanh(z) : z;
    }
    act = std::move(next);
  }
  return act[0];
}

}  // namespace

TEST_CASE("parameter_count counts weights and biases") {
  CHECK(random_net({3, 64, 64, 1}, 0).parameter_count() == 4481);
  CHECK(random_net({2, 1}, 0).parameter_count() == 3);
  CHECK(random_net({7, 5, 1}, 0).parameter_count() == 7 * 5 + 5 + 5 + 1);
}

TEST_CASE("initialization is seeded with zero biases and bounded weights") {
  CounterRng r1(42, 10);
  CounterRng r2(42, 10);
  const Mlp a({3, 8, 1}, r1);
  const Mlp b({3, 8, 1}, r2);
  for (std::size_t l = 0; l < 2; ++l) {
    CHECK((a.weights()[l] - b.weights()[l]).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.biases()[l].cwiseAbs().maxCoeff() == 0.0);
  }
  const double limit0 = std::sqrt(6.0 / (3 + 8));
  CHECK(a.weights()[0].cwiseAbs().maxCoeff() < limit0);
  CHECK(a.weights()[0].cwiseAbs().maxCoeff() > 0.0);

  CounterRng r3(42, 11);
  const Mlp c({3, 8, 1}, r3);
  CHECK((a.weights()[0] - c.weights()[0]).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("network shape validation") {
  CounterRng rng(0, 0);
  CHECK_THROWS_AS(Mlp({3}, rng), ValidationError);
  CHECK_THROWS_AS(Mlp({3, 0, 1}, rng), ValidationError);
  CHECK_THROWS_AS(Mlp({3, 2}, rng), ValidationError);  // output must be scalar
  CHECK_THROWS_AS(Mlp({2, 1}, {Mat::Zero(1, 3)}, {Vec::Zero(1)}), ValidationError);
}

TEST_CASE("a single linear layer is an affine map") {
  Vec w(2);
  w << 1.0, 1.0;
  const Mlp net = linear_net(w, 0.0);
  Vec x(2);
  x << 3.0, 4.0;
  CHECK(net.forward(x) == doctest::Approx(7.0).epsilon(1e-15));
  const Mlp biased = linear_net(w, -2.0);
  CHECK(biased.forward(x) == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("zero parameters give a zero output") {
  const Mlp net({2, 3, 1}, {Mat::Zero(3, 2), Mat::Zero(1, 3)}, {Vec::Zero(3), Vec::Zero(1)});
  Vec x(2);
  x << 5.0, -4.0;
  CHECK(net.forward(x) == 0.0);
}

TEST_CASE("forward matches an independent loop evaluation") {
  CounterRng rng(50, 0);
  for (int trial = 0; trial < 30; ++trial) {
    const std::vector<int> dims = {1 + static_cast<int>(rng.next_below(4)),
                                   1 + static_cast<int>(rng.next_below(6)),
                                   1 + static_cast<int>(rng.next_below(6)), 1};
    const Mlp net = random_net(dims, 1000 + static_cast<std::uint64_t>(trial));
    const Vec x = random_vec(dims[0], rng);
    CHECK(net.forward(x) == doctest::Approx(forward_reference(net, x)).epsilon(1e-12));
  }
}

TEST_CASE("batch forward equals per-row forward") {
  CounterRng rng(51, 0);
  const Mlp net = random_net({3, 5, 1}, 7);
  const Mat xs = random_mat(6, 3, rng);
  const Vec batch = net.forward_batch(xs);
  for (int i = 0; i < 6; ++i)
    CHECK(batch[i] == doctest::Approx(net.forward(xs.row(i).transpose())).epsilon(1e-14));
}

TEST_CASE("linear-layer gradients have their closed form") {
  Vec w(2);
  w << 0.5, -2.0;
  const Mlp net = linear_net(w, 0.25);
  Vec x(2);
  x << 3.0, 1.0;
  const auto g = net.backward(x, 2.0);
  CHECK(g.weight_grads[0](0, 0) == doctest::Approx(2.0 * 3.0));
  CHECK(g.weight_grads[0](0, 1) == doctest::Approx(2.0 * 1.0));
  CHECK(g.bias_grads[0][0] == doctest::Approx(2.0));
  CHECK(g.input_grad[0] == doctest::Approx(2.0 * 0.5));
  CHECK(g.input_grad[1] == doctest::Approx(2.0 * -2.0));

  const auto zero = net.backward(x, 0.0);
  CHECK(zero.weight_grads[0].cwiseAbs().maxCoeff() == 0.0);
  CHECK(zero.input_grad.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("backward matches central finite differences") {
  CounterRng rng(52, 0);
  const double h = 1e-5;
  for (int trial = 0; trial < 50; ++trial) {
    const std::vector<int> dims = {1 + static_cast<int>(rng.next_below(3)),
                                   1 + static_cast<int>(rng.next_below(5)), 1};
    Mlp net = random_net(dims, 2000 + static_cast<std::uint64_t>(trial));
    const Vec x = random_vec(dims[0], rng);
    const double upstream = rng.next_uniform(-2.0, 2.0);
    const auto g = net.backward(x, upstream);

    for (int l = 0; l < net.n_layers(); ++l) {
      Mat& wl = net.weights()[static_cast<std::size_t>(l)];
      for (int i = 0; i < wl.rows(); ++i)
        for (int j = 0; j < wl.cols(); ++j) {
          const double keep = wl(i, j);
          wl(i, j) = keep + h;
          const double up = upstream * net.forward(x);
          wl(i, j) = keep - h;
          const double dn = upstream * net.forward(x);
          wl(i, j) = keep;
          const double fd = (up - dn) / (2.0 * h);
          const double got = g.weight_grads[static_cast<std::size_t>(l)](i, j);
          CHECK(std::abs(got - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
        }
      Vec& bl = net.biases()[static_cast<std::size_t>(l)];
      for (int i = 0; i < bl.size(); ++i) {
        const double keep = bl[i];
        bl[i] = keep + h;
        const double up = upstream * net.forward(x);
        bl[i] = keep - h;
        const double dn = upstream * net.forward(x);
        bl[i] = keep;
        const double fd = (up - dn) / (2.0 * h);
        CHECK(std::abs(g.bias_grads[static_cast<std::size_t>(l)][i] - fd) <=
              1e-4 * std::max(1.0, std::abs(fd)));
      }
    }
    for (int j = 0; j < x.size(); ++j) {
      Vec xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      const double fd = upstream * (net.forward(xp) - net.forward(xm)) / (2.0 * h);
      CHECK(std::abs(g.input_grad[j] - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("batch backward sums per-row parameter gradients") {
  CounterRng rng(53, 0);
  const Mlp net = random_net({3, 4, 1}, 9);
  const Mat xs = random_mat(5, 3, rng);
  const Vec upstream = random_vec(5, rng);
  const auto batch = net.backward_batch(xs, upstream);

  std::vector<Mat> wsum;
  std::vector<Vec> bsum;
  for (int l = 0; l < net.n_layers(); ++l) {
    wsum.push_back(Mat::Zero(net.weights()[static_cast<std::size_t>(l)].rows(),
                             net.weights()[static_cast<std::size_t>(l)].cols()));
    bsum.push_back(Vec::Zero(net.biases()[static_cast<std::size_t>(l)].size()));
  }
  for (int i = 0; i < 5; ++i) {
    const auto g = net.backward(xs.row(i).transpose(), upstream[i]);
    for (std::size_t l = 0; l < wsum.size(); ++l) {
      wsum[l] += g.weight_grads[l];
      bsum[l] += g.bias_grads[l];
    }
    CHECK((batch.input_grads.row(i).transpose() - g.input_grad).cwiseAbs().maxCoeff() < 1e-12);
  }
  for (std::size_t l = 0; l < wsum.size(); ++l) {
    CHECK((batch.weight_grads[l] - wsum[l]).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((batch.bias_grads[l] - bsum[l]).cwiseAbs().maxCoeff() < 1e-12);
  }

  const Mat only_inputs = net.input_gradients(xs, upstream);
  CHECK((only_inputs - batch.input_grads).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("param views expose every parameter exactly once") {
  Mlp net = random_net({3, 4, 1}, 13);
  auto views = param_views(net);
  std::int64_t total = 0;
  for (const auto& v : views) total += v.size;
  CHECK(total == net.parameter_count());

  for (auto& v : views)
    for (std::ptrdiff_t i = 0; i < v.size; ++i) v.data[i] = 0.0;
  Vec x(3);
  x << 0.3, -0.4, 0.9;
  CHECK(net.forward(x) == 0.0);
}

TEST_CASE("adam leaves parameters alone under zero gradients") {
  Mlp net = random_net({2, 3, 1}, 21);
  const Mlp before = net;
  auto params = param_views(net);
  AdamState state(params);
  auto grads = net.backward_batch(Mat::Zero(1, 2), Vec::Zero(1));
  adam_step(params, grad_views(grads), state, AdamConfig{});
  for (std::size_t l = 0; l < 2; ++l)
    CHECK((net.weights()[l] - before.weights()[l]).cwiseAbs().maxCoeff() == 0.0);
  CHECK(state.step_count() == 1);
}

TEST_CASE("the first adam step moves by about lr in gradient sign") {
  Vec w(1);
  w << 2.0;
  Mlp net = linear_net(w, 0.0);
  auto params = param_views(net);
  AdamState state(params);
  AdamConfig cfg;
  cfg.lr = 0.05;

  Mat x(1, 1);
  x << 3.0;
  Vec upstream(1);
  upstream << 1.0;
  auto grads = net.backward_batch(x, upstream);  // dW = 3, db = 1
  adam_step(params, grad_views(grads), state, cfg);
  CHECK(net.weights()[0](0, 0) == doctest::Approx(2.0 - 0.05).epsilon(1e-6));
  CHECK(net.biases()[0][0] == doctest::Approx(-0.05).epsilon(1e-6));
}

TEST_CASE("adam matches a hand-rolled reference over several steps") {
  Vec w(2);
  w << 1.0, -1.0;
  Mlp net = linear_net(w, 0.5);
  auto params = param_views(net);
  AdamState state(params);
  AdamConfig cfg;
  cfg.lr = 0.1;

  // Mirror state: the same three scalars under the same update rule.
  double theta[3] = {1.0, -1.0, 0.5};
  double m[3] = {0, 0, 0};
  double v[3] = {0, 0, 0};

  Mat x(1, 2);
  x << 2.0, -3.0;
  Vec upstream(1);
  upstream << 1.5;

  for (int step = 1; step <= 5; ++step) {
    auto grads = net.backward_batch(x, upstream);
    const double g[3] = {grads.weight_grads[0](0, 0), grads.weight_grads[0](0, 1),
                         grads.bias_grads[0][0]};
    adam_step(params, grad_views(grads), state, cfg);
    for (int i = 0; i < 3; ++i) {
      m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / (1 - std::pow(cfg.beta1, step));
      const double vhat = v[i] / (1 - std::pow(cfg.beta2, step));
      theta[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
    CHECK(net.weights()[0](0, 0) == doctest::Approx(theta[0]).epsilon(1e-12));
    CHECK(net.weights()[0](0, 1) == doctest::Approx(theta[1]).epsilon(1e-12));
    CHECK(net.biases()[0][0] == doctest::Approx(theta[2]).epsilon(1e-12));
  }
}

TEST_CASE("a small net fits a sine segment") {
  CounterRng rng(99, 0);
  Mlp net({1, 16, 1}, rng);
  const int n = 60;
  Mat xs(n, 1);
  Vec ys(n);
  for (int i = 0; i < n; ++i) {
    xs(i, 0) = -1.0 + 2.0 * i / (n - 1);
    ys[i] = std::sin(3.0 * xs(i, 0));
  }

  auto params = param_views(net);
  AdamState state(params);
  AdamConfig cfg;
  cfg.lr = 0.01;
  for (int step = 0; step < 2000; ++step) {
    const Vec pred = net.forward_batch(xs);
    const Vec upstream = 2.0 * (pred - ys) / n;
    auto grads = net.backward_batch(xs, upstream);
    adam_step(params, grad_views(grads), state, cfg);
  }
  const Vec pred = net.forward_batch(xs);
  CHECK((pred - ys).squaredNorm() / n < 1e-2);
}

TEST_CASE("checkpoint json round-trips bit-exactly") {
  const Mlp net = random_net({3, 6, 1}, 8);
  const Mlp back = Mlp::from_json(net.to_json());
  CounterRng rng(60, 0);
  for (int i = 0; i < 20; ++i) {
    const Vec x = random_vec(3, rng);
    CHECK(back.forward(x) == net.forward(x));
  }

  auto j = net.to_json();
  j["layer_dims"] = {3, 5, 1};
  CHECK_THROWS_AS(Mlp::from_json(j), ValidationError);
  CHECK_THROWS_AS(Mlp::from_json(nlohmann::json{{"bogus", 1}}), ValidationError);
}
