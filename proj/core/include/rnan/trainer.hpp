#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "rnan/data.hpp"
#include "rnan/model.hpp"

namespace rnan {

struct TrainConfig {
  int batch_size = 16;
  int patch = 48;              // LR patch size
  double lr0 = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-8;
  int halve_every_epochs = 200;
  int total_epochs = 0;        // must be set for train_loop
  int steps_per_epoch = 1000;  // an "epoch" is this many optimizer steps
  uint64_t seed = 0;
  int log_every = 50;
  std::string precision = "float32";  // float32 | float64

  void validate() const;
};

// lr0 * 0.5^floor(epoch / halve_every_epochs)
double lr_at_epoch(int epoch, const TrainConfig& cfg);

// First/second moment buffers, one entry per parameter in canonical order.
template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m, v;
  int64_t t = 0;
};

// Bias-corrected Adam update in place; reads each parameter's gradient buffer
// and increments t once per call.
template <typename T>
void adam_step(const std::vector<typename RnanWeights<T>::Named>& params,
               AdamState<T>& state, const TrainConfig& cfg, double lr);

// Owns one weight set and its optimizer state for the duration of a run.
template <typename T>
class Trainer {
 public:
  Trainer(RnanWeights<T> weights, TrainConfig cfg);

  // forward -> L1 -> backward -> adam -> gradients cleared. Returns the loss;
  // throws on a non-finite loss with the step, lr and batch ids.
  double train_step(const typename BatchStream<T>::Batch& batch, double lr);

  int64_t step() const { return step_; }
  int epoch() const { return static_cast<int>(step_ / cfg_.steps_per_epoch); }
  const TrainConfig& config() const { return cfg_; }
  RnanWeights<T>& weights() { return weights_; }
  const RnanWeights<T>& weights() const { return weights_; }
  AdamState<T>& optimizer_state() { return state_; }

  // Adopts a new schedule on resume. Only total_epochs and log_every may
  // change; anything affecting the step sequence is rejected.
  void set_schedule(const TrainConfig& updated);

  // Captures weights + optimizer state + rng state + counters; round-trip is
  // exact (tensors stored at native precision).
  void save_checkpoint(const std::string& path) const;
  static Trainer load_checkpoint(const std::string& path);
  // Rejects checkpoints whose model config differs from `expected`.
  static Trainer load_checkpoint(const std::string& path,
                                 const ModelConfig& expected);

 private:
  RnanWeights<T> weights_;
  TrainConfig cfg_;
  std::vector<typename RnanWeights<T>::Named> params_;
  AdamState<T> state_;
  std::mt19937_64 rng_;
  int64_t step_ = 0;

  friend struct TrainerAccess;
};

struct TrainResult {
  int64_t steps_run = 0;
  double final_loss = 0.0;
  std::vector<double> losses;  // one entry per step of this call
};

// Runs from the trainer's current step to total_epochs*steps_per_epoch,
// appending to <out_dir>/metrics.csv (step,epoch,lr,loss) and writing
// <out_dir>/checkpoint.rnanck after every epoch plus <out_dir>/weights.rnanw
// at the end. Empty out_dir disables file output. Resuming a checkpointed
// run reproduces the uninterrupted run bitwise in strict-deterministic mode.
template <typename T>
TrainResult train_loop(Trainer<T>& trainer, const BatchStream<T>& stream,
                       const std::string& out_dir);

}  // namespace rnan
