#include "audiomt/optimizer.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "audiomt/error.hpp"

namespace audiomt {

double LrSchedule::at(std::int64_t step) const {
  if (step < 1) step = 1;
  if (warmup > 0 && step <= warmup) {
    return peak * static_cast<double>(step) / static_cast<double>(warmup);
  }
  const std::int64_t span = total - warmup;
  if (span <= 0) return peak;
  const double progress =
      std::min(1.0, static_cast<double>(step - warmup) / static_cast<double>(span));
  return minimum + 0.5 * (peak - minimum) * (1.0 + std::cos(std::numbers::pi * progress));
}

std::string_view to_string(TrainStage stage) {
  switch (stage) {
    case TrainStage::Pretrain: return "pretrain";
    case TrainStage::Finetune: return "finetune";
    case TrainStage::Joint: return "joint";
  }
  return "?";
}

TrainStage parse_stage(std::string_view name) {
  if (name == "pretrain") return TrainStage::Pretrain;
  if (name == "finetune") return TrainStage::Finetune;
  if (name == "joint") return TrainStage::Joint;
  throw Error(ErrorCode::Usage, "unknown stage " + std::string(name));
}

bool trains(TrainStage stage, ParamBlock block) {
  switch (stage) {
    case TrainStage::Pretrain: return block == ParamBlock::Encoder;
    case TrainStage::Finetune: return block == ParamBlock::Decoder;
    case TrainStage::Joint: return true;
  }
  return false;
}

GradientScope scope_for(TrainStage stage) {
  return {trains(stage, ParamBlock::Encoder), trains(stage, ParamBlock::Decoder)};
}

template <typename S>
OptimizerState<S> OptimizerState<S>::init(const Parameters<S>& params, AdamWConfig hp) {
  OptimizerState st;
  st.hp = hp;
  for (const auto& t : params.tensors) {
    st.m.push_back(Matrix<S>::Zero(t.value.rows(), t.value.cols()));
    st.v.push_back(Matrix<S>::Zero(t.value.rows(), t.value.cols()));
  }
  return st;
}

namespace {

template <typename S>
double grad_norm(const Parameters<S>& grads, TrainStage stage) {
  double sq = 0.0;
  for (const auto& t : grads.tensors) {
    if (trains(stage, t.block)) sq += static_cast<double>(t.value.squaredNorm());
  }
  return std::sqrt(sq);
}

}  // namespace

template <typename S>
double apply_update(Parameters<S>& params, Parameters<S>& grads, OptimizerState<S>& opt,
                    TrainStage stage, double lr) {
  const double norm = grad_norm(grads, stage);
  const auto& hp = opt.hp;
  const double clip = hp.grad_clip > 0.0 && norm > hp.grad_clip ? hp.grad_clip / norm : 1.0;
  opt.step += 1;
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(opt.step));
  const S b1 = static_cast<S>(hp.beta1), b2 = static_cast<S>(hp.beta2);
  const S step_size = static_cast<S>(lr / bc1);
  const S inv_bc2 = static_cast<S>(1.0 / bc2);
  const S eps = static_cast<S>(hp.eps);
  const S decay = static_cast<S>(1.0 - lr * hp.weight_decay);
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    auto& p = params.tensors[i];
    if (!trains(stage, p.block)) continue;
    auto& g = grads.tensors[i].value;
    if (clip != 1.0) g *= static_cast<S>(clip);
    opt.m[i] = b1 * opt.m[i] + (1 - b1) * g;
    opt.v[i] = b2 * opt.v[i] + (1 - b2) * g.cwiseProduct(g);
    p.value *= decay;
    p.value.array() -= step_size * opt.m[i].array() / ((opt.v[i].array() * inv_bc2).sqrt() + eps);
  }
  return norm;
}

template <typename S>
StepResult train_step(std::span<const TrainingExample> batch, Parameters<S>& params,
                      OptimizerState<S>& opt, TrainStage stage, const LrSchedule& schedule) {
  if (batch.empty()) throw Error(ErrorCode::InvalidExample, "empty batch");
  const GradientScope scope = scope_for(stage);
  // Token-pooled mean: first count the positions so gradients can be scaled
  // during accumulation.
  std::size_t positions = 0;
  for (const auto& ex : batch) {
    for (std::size_t t = 1; t < ex.loss_mask.size(); ++t) positions += ex.loss_mask[t] != 0;
  }
  if (positions == 0) throw Error(ErrorCode::InvalidExample, "batch has no loss positions");
  const S scale = static_cast<S>(1.0 / static_cast<double>(positions));
  Parameters<S> grads = params.zeros_like();
  double nll = 0.0;
  for (const auto& ex : batch) nll += accumulate_gradients(ex, params, scale, grads, scope).nll;
  const double mean = nll / static_cast<double>(positions);
  const double norm = grad_norm(grads, stage);
  if (!std::isfinite(mean) || !std::isfinite(norm)) {
    throw Error(ErrorCode::DivergenceDetected,
                "non-finite loss or gradient at step " + std::to_string(opt.step + 1));
  }
  StepResult r;
  r.step = opt.step + 1;
  r.lr = schedule.at(r.step);
  r.loss = mean;
  r.grad_norm = apply_update(params, grads, opt, stage, r.lr);
  return r;
}

template struct OptimizerState<double>;
template struct OptimizerState<float>;
template double apply_update<double>(Parameters<double>&, Parameters<double>&,
                                     OptimizerState<double>&, TrainStage, double);
template double apply_update<float>(Parameters<float>&, Parameters<float>&,
                                    OptimizerState<float>&, TrainStage, double);
template StepResult train_step<double>(std::span<const TrainingExample>, Parameters<double>&,
                                       OptimizerState<double>&, TrainStage, const LrSchedule&);
template StepResult train_step<float>(std::span<const TrainingExample>, Parameters<float>&,
                                      OptimizerState<float>&, TrainStage, const LrSchedule&);

}  // namespace audiomt
