#include "romo/particle.hpp"

#include "romo/errors.hpp"
#include "romo/io.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

namespace romo {

namespace {

constexpr int kTrajectoryStepCap = 1024;

void record_trajectory(ParticleState& state, const Vec& values) {
  if (!state.trajectory || state.step >= kTrajectoryStepCap) return;
  for (int i = 0; i < state.n_particles(); ++i)
    state.trajectory->rows.push_back(
        {i, state.step, state.positions.row(i).transpose(), values[i]});
}

void check_finite_grads(const Mat& grads, int step) {
  for (Eigen::Index i = 0; i < grads.rows(); ++i)
    if (!grads.row(i).allFinite())
      throw ValidationError("non-finite gradient for particle " + std::to_string(i) +
                            " at step " + std::to_string(step));
}

// eta * grads with fixed dimensions zeroed.
Mat masked_delta(const Mat& grads, const ConstraintMask& mask, double eta) {
  Mat delta = eta * grads;
  for (int j = 0; j < mask.dim(); ++j)
    if (!mask.optimizable(j)) delta.col(j).setZero();
  return delta;
}

}  // namespace

ModelSurrogate::ModelSurrogate(const RomoModel& model, std::optional<RetrievalPool> pool)
    : model_(model), pool_(std::move(pool)) {
  if (method_uses_retrieval(model_.method())) {
    if (!pool_) throw ValidationError("this method needs a retrieval pool");
    if (pool_->dim() != model_.dim()) throw ValidationError("pool dimension mismatch");
    if (pool_->size() < model_.config().k)
      throw ValidationError("pool smaller than retrieval size");
  }
}

void ModelSurrogate::eval(const Mat& positions, Vec& values, Mat& grads) const {
  std::vector<RetrievalSet> rsets;
  if (method_uses_retrieval(model_.method()))
    rsets = retrieve_batch(*pool_, positions, model_.config().k, model_.config().sim);
  model_.surrogate_with_input_grad(positions, rsets, values, grads);
}

void TrajectoryLog::save_csv(const std::filesystem::path& path) const {
  std::ostringstream out;
  const int d = rows.empty() ? 0 : static_cast<int>(rows.front().position.size());
  out << "particle_id,step";
  for (int j = 0; j < d; ++j) out << ",x" << j;
  out << ",predicted_h\n";
  for (const TrajectoryRow& r : rows) {
    out << r.particle << "," << r.step;
    for (int j = 0; j < d; ++j) out << "," << format_double(r.position[j]);
    out << "," << format_double(r.predicted) << "\n";
  }
  write_text_file(path, out.str());
}

ParticleState::ParticleState(Mat positions_in, ConstraintMask mask_in)
    : positions(std::move(positions_in)), mask(std::move(mask_in)) {
  if (positions.rows() == 0) throw ValidationError("no particles");
  if (positions.cols() != mask.dim())
    throw ValidationError("particle and mask dimensions differ");
  if (!positions.allFinite()) throw ValidationError("non-finite initial particles");
}

void ascent_step(const Surrogate& surrogate, ParticleState& state, double eta) {
  if (!(eta > 0.0)) throw ValidationError("step size must be positive");
  if (surrogate.dim() != state.dim()) throw ValidationError("surrogate dimension mismatch");
  Vec values;
  Mat grads;
  surrogate.eval(state.positions, values, grads);
  check_finite_grads(grads, state.step);
  record_trajectory(state, values);
  state.positions += masked_delta(grads, state.mask, eta);
  ++state.step;
}

Mat run_protocol1(const Surrogate& surrogate, ParticleState& state,
                  const ProtocolConfig& config) {
  if (config.kind != ProtocolConfig::Kind::P1)
    throw ValidationError("run_protocol1 needs a P1 config");
  if (!(config.eta > 0.0)) throw ValidationError("step size must be positive");
  if (config.max_steps < 0) throw ValidationError("max_steps must be non-negative");
  if (surrogate.dim() != state.dim()) throw ValidationError("surrogate dimension mismatch");

  const int n = state.n_particles();
  Vec values;
  Mat grads;
  surrogate.eval(state.positions, values, grads);
  check_finite_grads(grads, state.step);
  record_trajectory(state, values);

  Mat best_positions = state.positions;
  Vec best_values = values;
  std::vector<char> active(static_cast<std::size_t>(n), char(1));

  for (int done = 0; done < config.max_steps; ++done) {
    const Mat delta = masked_delta(grads, state.mask, config.eta);
    bool any_active = false;
    for (int i = 0; i < n; ++i) {
      auto& flag = active[static_cast<std::size_t>(i)];
      if (flag && delta.row(i).lpNorm<Eigen::Infinity>() < config.converge_tol)
        flag = char(0);
      any_active = any_active || flag;
    }
    if (!any_active) break;

    for (int i = 0; i < n; ++i)
      if (active[static_cast<std::size_t>(i)]) state.positions.row(i) += delta.row(i);
    ++state.step;

    surrogate.eval(state.positions, values, grads);
    check_finite_grads(grads, state.step);
    record_trajectory(state, values);
    for (int i = 0; i < n; ++i) {
      if (active[static_cast<std::size_t>(i)] && values[i] > best_values[i]) {
        best_values[i] = values[i];
        best_positions.row(i) = state.positions.row(i);
      }
    }
  }
  return best_positions;
}

std::vector<Mat> run_protocol2(const Surrogate& surrogate, ParticleState& state,
                               const ProtocolConfig& config) {
  if (config.kind != ProtocolConfig::Kind::P2)
    throw ValidationError("run_protocol2 needs a P2 config");
  if (config.t < 1 || config.q < 1 || config.q > config.t)
    throw ValidationError("protocol 2 needs 1 <= Q <= T");

  const int n = state.n_particles();
  std::vector<Mat> out(static_cast<std::size_t>(n),
                       Mat(config.q, state.dim()));
  int emitted = 0;
  for (int t = 1; t <= config.t; ++t) {
    ascent_step(surrogate, state, config.eta);
    if (t > config.t - config.q) {
      for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)].row(emitted) =
          state.positions.row(i);
      ++emitted;
    }
  }

  if (state.trajectory && state.step < kTrajectoryStepCap) {
    Vec values;
    Mat grads;
    surrogate.eval(state.positions, values, grads);
    record_trajectory(state, values);
  }
  return out;
}

}  // namespace romo
