#include "romo/particle.hpp"

#include "romo/errors.hpp"
#include "romo/io.hpp"
#include "romo/rng.hpp"
#include "temp_dir.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

using namespace romo;
using romo_test::TempDir;

namespace {

// Concave paraboloid peaking at `center`.
class QuadSurrogate : public Surrogate {
public:
  explicit QuadSurrogate(Vec center) : center_(std::move(center)) {}
  int dim() const override { return static_cast<int>(center_.size()); }
  void eval(const Mat& positions, Vec& values, Mat& grads) const override {
    values = Vec(positions.rows());
    grads = Mat(positions.rows(), positions.cols());
    for (int i = 0; i < positions.rows(); ++i) {
      const Vec diff = positions.row(i).transpose() - center_;
      values[i] = -diff.squaredNorm();
      grads.row(i) = (-2.0 * diff).transpose();
    }
  }

private:
  Vec center_;
};

class CountingSurrogate : public Surrogate {
public:
  explicit CountingSurrogate(const Surrogate& inner) : inner_(inner) {}
  int dim() const override { return inner_.dim(); }
  void eval(const Mat& positions, Vec& values, Mat& grads) const override {
    ++evals_;
    inner_.eval(positions, values, grads);
  }
  int evals() const { return evals_; }

private:
  const Surrogate& inner_;
  mutable int evals_ = 0;
};

// Gradient 1 everywhere except particle 0 on the very first evaluation.
class FirstEvalFlatSurrogate : public Surrogate {
public:
  int dim() const override { return 1; }
  void eval(const Mat& positions, Vec& values, Mat& grads) const override {
    ++evals_;
    values = positions.col(0);
    grads = Mat::Ones(positions.rows(), 1);
    if (evals_ == 1) grads(0, 0) = 0.0;
  }

private:
  mutable int evals_ = 0;
};

class NanGradSurrogate : public Surrogate {
public:
  int dim() const override { return 1; }
  void eval(const Mat& positions, Vec& values, Mat& grads) const override {
    values = Vec::Zero(positions.rows());
    grads = Mat::Constant(positions.rows(), 1, std::nan(""));
  }
};

// Unbounded linear slope; never converges.
class LinearSurrogate : public Surrogate {
public:
  int dim() const override { return 1; }
  void eval(const Mat& positions, Vec& values, Mat& grads) const override {
    values = positions.col(0);
    grads = Mat::Ones(positions.rows(), 1);
  }
};

ProtocolConfig p1_config(double eta, int max_steps, double tol = 1e-10) {
  ProtocolConfig cfg;
  cfg.kind = ProtocolConfig::Kind::P1;
  cfg.eta = eta;
  cfg.max_steps = max_steps;
  cfg.converge_tol = tol;
  return cfg;
}

ProtocolConfig p2_config(double eta, int t, int q) {
  ProtocolConfig cfg;
  cfg.kind = ProtocolConfig::Kind::P2;
  cfg.eta = eta;
  cfg.t = t;
  cfg.q = q;
  return cfg;
}

}  // namespace

TEST_CASE("one ascent step moves along the masked gradient") {
  QuadSurrogate quad(Vec::Constant(1, 1.0));
  ParticleState state(Mat::Zero(1, 1), ConstraintMask::all_optimizable(1));
  ascent_step(quad, state, 0.1);
  CHECK(state.positions(0, 0) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(state.step == 1);
}

TEST_CASE("ascent steps leave fixed dimensions untouched") {
  Vec center(2);
  center << 1.0, 1.0;
  QuadSurrogate quad(center);
  Mat init(1, 2);
  init << 0.25, 0.37;
  ParticleState state(init, ConstraintMask::from_fixed_dims({1}, 2));
  for (int i = 0; i < 20; ++i) ascent_step(quad, state, 0.1);
  CHECK(state.positions(0, 0) != 0.25);
  CHECK(state.positions(0, 1) == 0.37);  // bit-identical, not merely close
}

TEST_CASE("ascent validates step size and dimensions") {
  QuadSurrogate quad(Vec::Zero(2));
  ParticleState state(Mat::Zero(1, 2), ConstraintMask::all_optimizable(2));
  CHECK_THROWS_AS(ascent_step(quad, state, 0.0), ValidationError);
  CHECK_THROWS_AS(ascent_step(quad, state, -0.1), ValidationError);
  QuadSurrogate wrong_d(Vec::Zero(3));
  CHECK_THROWS_AS(ascent_step(wrong_d, state, 0.1), ValidationError);
}

TEST_CASE("particle state validates its inputs") {
  CHECK_THROWS_AS(ParticleState(Mat(0, 2), ConstraintMask::all_optimizable(2)),
                  ValidationError);
  CHECK_THROWS_AS(ParticleState(Mat::Zero(1, 3), ConstraintMask::all_optimizable(2)),
                  ValidationError);
  Mat bad = Mat::Zero(1, 2);
  bad(0, 0) = std::nan("");
  CHECK_THROWS_AS(ParticleState(bad, ConstraintMask::all_optimizable(2)), ValidationError);
}

TEST_CASE("protocol 1 climbs a concave bowl to its peak") {
  Vec center(2);
  center << 0.3, -0.2;
  QuadSurrogate quad(center);
  CounterRng rng(80, 0);
  Mat init(5, 2);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 2; ++j) init(i, j) = rng.next_uniform(-1.0, 1.0);
  ParticleState state(init, ConstraintMask::all_optimizable(2));
  const Mat best = run_protocol1(quad, state, p1_config(0.2, 1000));
  for (int i = 0; i < 5; ++i)
    CHECK((best.row(i).transpose() - center).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("protocol 1 under a mask converges on the free axis only") {
  Vec center(2);
  center << 0.5, 0.5;
  QuadSurrogate quad(center);
  Mat init(1, 2);
  init << -0.4, 0.125;
  ParticleState state(init, ConstraintMask::from_fixed_dims({1}, 2));
  const Mat best = run_protocol1(quad, state, p1_config(0.2, 1000));
  CHECK(std::abs(best(0, 0) - 0.5) < 1e-6);
  CHECK(best(0, 1) == 0.125);
}

TEST_CASE("a loose tolerance returns the initial particles after one evaluation") {
  QuadSurrogate quad(Vec::Constant(2, 1.0));
  CountingSurrogate counter(quad);
  Mat init(3, 2);
  init << 0.0, 0.0, 0.5, 0.5, -1.0, 2.0;
  ParticleState state(init, ConstraintMask::all_optimizable(2));
  const Mat best = run_protocol1(counter, state, p1_config(0.1, 1000, /*tol=*/100.0));
  CHECK((best - init).cwiseAbs().maxCoeff() == 0.0);
  CHECK(counter.evals() == 1);
}

TEST_CASE("zero max_steps returns the initial particles") {
  QuadSurrogate quad(Vec::Constant(1, 1.0));
  Mat init = Mat::Zero(2, 1);
  ParticleState state(init, ConstraintMask::all_optimizable(1));
  const Mat best = run_protocol1(quad, state, p1_config(0.1, 0));
  CHECK((best - init).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("a particle that converges stays frozen for the rest of the run") {
  FirstEvalFlatSurrogate surface;
  Mat init(2, 1);
  init << 0.625, 0.0;
  ParticleState state(init, ConstraintMask::all_optimizable(1));
  run_protocol1(surface, state, p1_config(0.1, 5, 1e-6));
  CHECK(state.positions(0, 0) == 0.625);  // froze at step one, later slope ignored
  CHECK(state.positions(1, 0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("protocol 1 returns the best predicted position ever visited") {
  // Overshooting eta makes every step worse; the start must win.
  QuadSurrogate quad(Vec::Zero(1));
  Mat init = Mat::Constant(1, 1, 1.0);
  ParticleState state(init, ConstraintMask::all_optimizable(1));
  const Mat best = run_protocol1(quad, state, p1_config(1.5, 3, 1e-12));
  CHECK(best(0, 0) == 1.0);
  CHECK(state.positions(0, 0) != 1.0);  // the walker itself diverged
}

TEST_CASE("protocol 1 rejects a protocol 2 config") {
  QuadSurrogate quad(Vec::Zero(1));
  ParticleState state(Mat::Zero(1, 1), ConstraintMask::all_optimizable(1));
  CHECK_THROWS_AS(run_protocol1(quad, state, p2_config(0.1, 10, 2)), ValidationError);
  CHECK_THROWS_AS(run_protocol2(quad, state, p1_config(0.1, 10)), ValidationError);
}

TEST_CASE("protocol 2 takes exactly T steps and emits the last Q positions") {
  const double eta = 0.1;
  const int t_steps = 6;
  const int q = 3;
  Vec center(1);
  center << 2.0;
  QuadSurrogate quad(center);
  CountingSurrogate counter(quad);

  Mat init(2, 1);
  init << 0.0, 1.0;
  ParticleState state(init, ConstraintMask::all_optimizable(1));
  const auto out = run_protocol2(counter, state, p2_config(eta, t_steps, q));
  CHECK(counter.evals() == t_steps);  // no trailing evaluation without a trajectory
  REQUIRE(out.size() == 2);

  for (int i = 0; i < 2; ++i) {
    REQUIRE(out[static_cast<std::size_t>(i)].rows() == q);
    double x = init(i, 0);
    std::vector<double> visited;
    for (int step = 0; step < t_steps; ++step) {
      x += eta * -2.0 * (x - center[0]);
      visited.push_back(x);
    }
    for (int r = 0; r < q; ++r) {
      const double want = visited[static_cast<std::size_t>(t_steps - q + r)];
      CHECK(out[static_cast<std::size_t>(i)](r, 0) == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("protocol 2 with Q equal to T emits the whole path") {
  QuadSurrogate quad(Vec::Constant(1, 1.0));
  ParticleState state(Mat::Zero(1, 1), ConstraintMask::all_optimizable(1));
  const auto out = run_protocol2(quad, state, p2_config(0.1, 4, 4));
  REQUIRE(out.size() == 1);
  CHECK(out[0].rows() == 4);
  CHECK(out[0](0, 0) == doctest::Approx(0.2).epsilon(1e-15));  // first post-step position
}

TEST_CASE("protocol 2 validates T and Q") {
  QuadSurrogate quad(Vec::Zero(1));
  ParticleState state(Mat::Zero(1, 1), ConstraintMask::all_optimizable(1));
  CHECK_THROWS_AS(run_protocol2(quad, state, p2_config(0.1, 4, 5)), ValidationError);
  CHECK_THROWS_AS(run_protocol2(quad, state, p2_config(0.1, 0, 0)), ValidationError);
}

TEST_CASE("protocol 2 keeps fixed dimensions bit-identical in every emitted row") {
  Vec center(2);
  center << 1.0, 1.0;
  QuadSurrogate quad(center);
  Mat init(3, 2);
  init << 0.1, 0.77, 0.2, 0.33, 0.3, -0.21;
  ParticleState state(init, ConstraintMask::from_fixed_dims({1}, 2));
  const auto out = run_protocol2(quad, state, p2_config(0.1, 10, 4));
  for (int i = 0; i < 3; ++i)
    for (int r = 0; r < 4; ++r) CHECK(out[static_cast<std::size_t>(i)](r, 1) == init(i, 1));
}

TEST_CASE("identical runs produce identical trajectories") {
  Vec center(2);
  center << 0.4, 0.6;
  QuadSurrogate quad(center);
  Mat init(4, 2);
  init << 0, 0, 1, 0, 0, 1, 1, 1;

  ParticleState a(init, ConstraintMask::all_optimizable(2));
  ParticleState b(init, ConstraintMask::all_optimizable(2));
  const Mat ra = run_protocol1(quad, a, p1_config(0.15, 200));
  const Mat rb = run_protocol1(quad, b, p1_config(0.15, 200));
  CHECK((ra - rb).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("non-finite gradients abort the ascent with the particle named") {
  NanGradSurrogate bad;
  ParticleState state(Mat::Zero(2, 1), ConstraintMask::all_optimizable(1));
  try {
    run_protocol1(bad, state, p1_config(0.1, 10));
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("particle 0") != std::string::npos);
  }
}

TEST_CASE("trajectories record every evaluation until the step cap") {
  Vec center(1);
  center << 1.0;
  QuadSurrogate quad(center);
  ParticleState state(Mat::Zero(2, 1), ConstraintMask::all_optimizable(1));
  state.trajectory = TrajectoryLog{};
  run_protocol1(quad, state, p1_config(0.2, 7, 1e-12));
  const auto& rows = state.trajectory->rows;
  REQUIRE(!rows.empty());
  CHECK(rows.size() % 2 == 0);  // both particles at every evaluation
  CHECK(rows[0].step == 0);
  CHECK(rows[0].position[0] == 0.0);
  CHECK(rows[0].predicted == doctest::Approx(-1.0).epsilon(1e-15));
  // The predicted value never drops along a stable quadratic ascent.
  for (std::size_t i = 2; i < rows.size(); ++i)
    CHECK(rows[i].predicted >= rows[i - 2].predicted - 1e-12);
}

TEST_CASE("the trajectory stops recording at the step cap") {
  LinearSurrogate slope;
  ParticleState state(Mat::Zero(1, 1), ConstraintMask::all_optimizable(1));
  state.trajectory = TrajectoryLog{};
  const auto out = run_protocol2(slope, state, p2_config(0.01, 1100, 1));
  REQUIRE(out.size() == 1);
  const auto& rows = state.trajectory->rows;
  CHECK(rows.size() == 1024);
  CHECK(rows.back().step == 1023);
}

TEST_CASE("trajectory csv lists one row per recorded evaluation") {
  TempDir tmp("traj");
  QuadSurrogate quad(Vec::Constant(1, 1.0));
  ParticleState state(Mat::Zero(1, 1), ConstraintMask::all_optimizable(1));
  state.trajectory = TrajectoryLog{};
  run_protocol2(quad, state, p2_config(0.1, 3, 1));
  const auto path = tmp / "traj.csv";
  state.trajectory->save_csv(path);
  const auto text = read_text_file(path);
  CHECK(text.find("particle_id,step,x0,predicted_h\n") == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') ==
        static_cast<long>(state.trajectory->rows.size()) + 1);
}

TEST_CASE("a model surrogate needs a pool exactly when its method retrieves") {
  Normalizer norm(Vec::Zero(2), Vec::Ones(2), 0.0, 1.0);
  ModelConfig cfg;
  cfg.hidden = {4};
  cfg.k = 3;

  const RomoModel grad_model(Method::Grad, cfg, norm, 2, 0);
  CHECK_NOTHROW(ModelSurrogate(grad_model, std::nullopt));

  const RomoModel rem_model(Method::RemN, cfg, norm, 2, 0);
  CHECK_THROWS_AS(ModelSurrogate(rem_model, std::nullopt), ValidationError);

  Mat pf = Mat::Zero(2, 2);
  pf(1, 0) = 1.0;
  RetrievalPool tiny(pf, Vec::Zero(2), {0, 1});
  CHECK_THROWS_AS(ModelSurrogate(rem_model, tiny), ValidationError);  // pool < k
}

TEST_CASE("a model surrogate re-retrieves at the evaluated positions") {
  CounterRng rng(81, 0);
  Normalizer norm(Vec::Zero(2), Vec::Ones(2), 0.0, 1.0);
  ModelConfig cfg;
  cfg.hidden = {4};
  cfg.k = 3;
  const RomoModel model(Method::RomoN, cfg, norm, 2, 7);

  Mat pf(8, 2);
  Vec ps(8);
  for (int i = 0; i < 8; ++i) {
    pf(i, 0) = rng.next_uniform(-1.0, 1.0);
    pf(i, 1) = rng.next_uniform(-1.0, 1.0);
    ps[i] = rng.next_uniform(-1.0, 1.0);
  }
  std::vector<int> idx(8);
  std::iota(idx.begin(), idx.end(), 0);
  RetrievalPool pool(pf, ps, idx);
  const ModelSurrogate surrogate(model, pool);

  Mat positions(3, 2);
  positions << 0.2, -0.1, 0.9, 0.9, -0.5, 0.4;
  Vec values;
  Mat grads;
  surrogate.eval(positions, values, grads);

  const auto rsets = retrieve_batch(pool, positions, cfg.k, cfg.sim);
  CHECK((values - model.surrogate_batch(positions, rsets)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(surrogate.dim() == 2);
}
