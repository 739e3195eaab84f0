#pragma once

#include "romo/dataset.hpp"
#include "romo/model.hpp"
#include "romo/retrieval.hpp"

#include <filesystem>
#include <optional>
#include <vector>

namespace romo {

// Anything the ascent can climb: batched values plus input gradients at a set
// of normalized positions. Tests inject closed-form surfaces through this.
class Surrogate {
public:
  virtual ~Surrogate() = default;
  virtual int dim() const = 0;
  virtual void eval(const Mat& positions, Vec& values, Mat& grads) const = 0;
};

// Trained model behind the Surrogate interface. Retrieval runs against the
// stored pool at every evaluation; gradients flow only through the direct
// design inputs.
class ModelSurrogate : public Surrogate {
public:
  ModelSurrogate(const RomoModel& model, std::optional<RetrievalPool> pool);

  int dim() const override { return model_.dim(); }
  void eval(const Mat& positions, Vec& values, Mat& grads) const override;

private:
  const RomoModel& model_;
  std::optional<RetrievalPool> pool_;
};

struct TrajectoryRow {
  int particle = 0;
  int step = 0;
  Vec position;
  double predicted = 0.0;
};

struct TrajectoryLog {
  std::vector<TrajectoryRow> rows;
  void save_csv(const std::filesystem::path& path) const;
};

// Particles under masked ascent, in normalized space. Fixed coordinates keep
// their step-0 bits forever.
struct ParticleState {
  Mat positions;
  ConstraintMask mask;
  int step = 0;
  std::optional<TrajectoryLog> trajectory;

  ParticleState(Mat positions, ConstraintMask mask);

  int n_particles() const { return static_cast<int>(positions.rows()); }
  int dim() const { return static_cast<int>(positions.cols()); }
};

struct ProtocolConfig {
  enum class Kind { P1, P2 };
  Kind kind = Kind::P1;
  double eta = 0.2;
  // P1: ascend until the prospective masked step drops below converge_tol
  // (per particle) or max_steps, then keep each particle's best-predicted
  // visited position.
  int max_steps = 1000;
  double converge_tol = 1e-6;
  // P2: exactly t steps, emit the last q positions per particle.
  int t = 250;
  int q = 10;
};

// One unconditional masked ascent step for every particle.
void ascent_step(const Surrogate& surrogate, ParticleState& state, double eta);

Mat run_protocol1(const Surrogate& surrogate, ParticleState& state,
                  const ProtocolConfig& config);

// result[i] is a q x d matrix of particle i's last q positions, oldest first.
std::vector<Mat> run_protocol2(const Surrogate& surrogate, ParticleState& state,
                               const ProtocolConfig& config);

}  // namespace romo
