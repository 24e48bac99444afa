#include "tempodet/detector/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tempodet/errors.hpp"

namespace tempodet::detector {

OptimizerKind optimizer_from_name(const std::string& name) {
  if (name == "sgd_momentum" || name == "sgd") return OptimizerKind::kSgdMomentum;
  if (name == "adamw") return OptimizerKind::kAdamW;
  throw ConfigError("unknown optimizer '" + name + "' (expected sgd_momentum or adamw)");
}

std::string optimizer_name(OptimizerKind kind) {
  return kind == OptimizerKind::kAdamW ? "adamw" : "sgd_momentum";
}

void Optimizer::step(const std::vector<Param<float>*>& params, double lr) {
  if (m_.empty()) {
    for (const auto* p : params) {
      m_.emplace_back(p->size(), 0.0f);
      if (config_.kind == OptimizerKind::kAdamW) v_.emplace_back(p->size(), 0.0f);
    }
  }
  if (m_.size() != params.size()) throw ShapeError("Optimizer::step: parameter list changed between steps");
  ++steps_;
  const auto& c = config_;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    if (p.size() != m_[i].size()) throw ShapeError("Optimizer::step: parameter '" + p.name + "' changed size");
    const bool decay = p.value.rank() >= 2 && c.weight_decay > 0;
    auto& m = m_[i];
    float* w = p.value.data();
    const float* g = p.grad.data();
    if (c.kind == OptimizerKind::kSgdMomentum) {
      for (std::size_t k = 0; k < m.size(); ++k) {
        const double gk = g[k] + (decay ? c.weight_decay * w[k] : 0.0);
        m[k] = static_cast<float>(c.momentum * m[k] + gk);
        w[k] = static_cast<float>(w[k] - lr * (gk + c.momentum * m[k]));
      }
    } else {
      auto& v = v_[i];
      for (std::size_t k = 0; k < m.size(); ++k) {
        const double gk = g[k];
        m[k] = static_cast<float>(c.beta1 * m[k] + (1 - c.beta1) * gk);
        v[k] = static_cast<float>(c.beta2 * v[k] + (1 - c.beta2) * gk * gk);
        const double update = (m[k] / bc1) / (std::sqrt(v[k] / bc2) + c.eps) + (decay ? c.weight_decay * w[k] : 0.0);
        w[k] = static_cast<float>(w[k] - lr * update);
      }
    }
  }
}

double clip_grad_norm(const std::vector<Param<float>*>& params, double max_norm) {
  double sq = 0.0;
  for (const auto* p : params)
    for (float g : p->grad.storage()) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const auto scale = static_cast<float>(max_norm / norm);
    for (auto* p : params)
      for (float& g : p->grad.storage()) g *= scale;
  }
  return norm;
}

double scheduled_lr(double lr, long step, long total_steps, long warmup_steps, double final_ratio) {
  if (warmup_steps > 0 && step < warmup_steps) return lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  const long span = std::max(1L, total_steps - warmup_steps);
  const double t = std::clamp(static_cast<double>(step - warmup_steps) / static_cast<double>(span), 0.0, 1.0);
  return lr * (final_ratio + (1 - final_ratio) * 0.5 * (1 + std::cos(std::numbers::pi * t)));
}

}  // namespace tempodet::detector
