#pragma once

#include <string>
#include <vector>

#include "tempodet/numkit/tensor.hpp"

namespace tempodet::detector {

using numkit::Param;

enum class OptimizerKind { kSgdMomentum, kAdamW };

OptimizerKind optimizer_from_name(const std::string& name);
std::string optimizer_name(OptimizerKind kind);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kSgdMomentum;
  double momentum = 0.937;  // SGD; Nesterov
  double beta1 = 0.9;       // AdamW
  double beta2 = 0.999;
  double eps = 1e-8;
  // Applied to weights of rank >= 2 only (biases, norms and gate vectors are left alone).
  double weight_decay = 5e-4;
};

// Per-parameter state is indexed by position, so the parameter list must be
// the same (same order, same shapes) on every call.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config) : config_(config) {}

  void step(const std::vector<Param<float>*>& params, double lr);
  long steps() const { return steps_; }
  const OptimizerConfig& config() const { return config_; }

 private:
  OptimizerConfig config_;
  long steps_ = 0;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
};

// Scales all gradients so their joint L2 norm is at most max_norm. Returns
// the norm before clipping. max_norm <= 0 disables clipping.
double clip_grad_norm(const std::vector<Param<float>*>& params, double max_norm);

// Linear warmup from 0 over `warmup_steps`, then cosine decay to lr * final_ratio.
double scheduled_lr(double lr, long step, long total_steps, long warmup_steps, double final_ratio);

}  // namespace tempodet::detector
