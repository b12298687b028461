#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"

namespace cocole {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Moment buffers laid out like the flattened parameter vector they track.
struct OptimizerState {
    AdamWConfig hyper;
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    std::uint64_t step = 0;

    static OptimizerState zeros(std::size_t size, AdamWConfig hyper = {});

    nlohmann::json to_json() const;
    static OptimizerState from_json(const nlohmann::json& doc);
};

// One AdamW update with bias correction and decoupled weight decay:
//   p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + decay_i * p)
// decay holds the per-parameter weight-decay coefficient.
void adamw_step(std::span<double> params, std::span<const double> grads, std::span<const double> decay,
                OptimizerState& state, double lr);

// 0.5 * lr0 * (1 + cos(pi * step / total_steps))
double cosine_lr(std::size_t step, std::size_t total_steps, double lr0);

}  // namespace cocole
