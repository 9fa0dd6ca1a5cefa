#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "audiomt/model.hpp"

namespace audiomt {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-6;
  double weight_decay = 0.05;
  double grad_clip = 1.0;  // global L2 norm; <= 0 disables
};

// Linear warmup to `peak` over `warmup` steps, then cosine decay to `minimum`
// at `total`. Steps are 1-based.
struct LrSchedule {
  double peak = 3e-4;
  double minimum = 3e-5;
  std::int64_t warmup = 200;
  std::int64_t total = 3000;

  double at(std::int64_t step) const;
};

enum class TrainStage {
  Pretrain,  // decoder frozen, encoder trained
  Finetune,  // encoder frozen, decoder trained
  Joint,     // both trained (from-scratch runs)
};

std::string_view to_string(TrainStage stage);
// Accepts "pretrain", "finetune", "joint"; throws Usage otherwise.
TrainStage parse_stage(std::string_view name);
bool trains(TrainStage stage, ParamBlock block);
GradientScope scope_for(TrainStage stage);

template <typename S>
struct OptimizerState {
  AdamWConfig hp;
  std::vector<Matrix<S>> m;
  std::vector<Matrix<S>> v;
  std::int64_t step = 0;

  static OptimizerState init(const Parameters<S>& params, AdamWConfig hp = {});
};

struct StepResult {
  std::int64_t step = 0;  // 1-based step just taken
  double lr = 0.0;
  double loss = 0.0;       // mean NLL over all selected positions in the batch
  double grad_norm = 0.0;  // before clipping
};

// Clips `grads` in place to the global norm limit, then applies one AdamW
// update with decoupled weight decay to the trainable subset. Returns the
// pre-clip norm.
template <typename S>
double apply_update(Parameters<S>& params, Parameters<S>& grads, OptimizerState<S>& opt,
                    TrainStage stage, double lr);

// Forward/backward over the batch, then apply_update. On a non-finite loss
// or gradient throws DivergenceDetected and leaves params and opt unchanged.
template <typename S>
StepResult train_step(std::span<const TrainingExample> batch, Parameters<S>& params,
                      OptimizerState<S>& opt, TrainStage stage, const LrSchedule& schedule);

}  // namespace audiomt
