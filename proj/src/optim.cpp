#include "cocole/optim.hpp"

#include <cmath>
#include <numbers>

#include "cocole/error.hpp"
#include "cocole/json_util.hpp"

namespace cocole {

using nlohmann::json;

OptimizerState OptimizerState::zeros(std::size_t size, AdamWConfig hyper) {
    OptimizerState s;
    s.hyper = hyper;
    s.first_moment.assign(size, 0.0);
    s.second_moment.assign(size, 0.0);
    return s;
}

json OptimizerState::to_json() const {
    return {{"beta1", hyper.beta1}, {"beta2", hyper.beta2}, {"eps", hyper.eps},
            {"step", step},         {"m", first_moment},    {"v", second_moment}};
}

OptimizerState OptimizerState::from_json(const json& doc) {
    const std::string what = "optimizer state";
    try {
        OptimizerState s;
        s.hyper.beta1 = field(doc, "beta1", what).get<double>();
        s.hyper.beta2 = field(doc, "beta2", what).get<double>();
        s.hyper.eps = field(doc, "eps", what).get<double>();
        s.step = field(doc, "step", what).get<std::uint64_t>();
        s.first_moment = field(doc, "m", what).get<std::vector<double>>();
        s.second_moment = field(doc, "v", what).get<std::vector<double>>();
        require(s.first_moment.size() == s.second_moment.size(), ErrorKind::kCorruptFile,
                what + ": moment buffers differ in length");
        return s;
    } catch (const json::exception& e) {
        fail(ErrorKind::kCorruptFile, what + ": " + e.what());
    }
}

void adamw_step(std::span<double> params, std::span<const double> grads, std::span<const double> decay,
                OptimizerState& state, double lr) {
    const auto n = params.size();
    require(grads.size() == n && decay.size() == n && state.first_moment.size() == n &&
                state.second_moment.size() == n,
            ErrorKind::kDimension, "adamw_step: parameter, gradient, decay and moment sizes differ");
    require(lr >= 0.0, ErrorKind::kContract, "adamw_step: negative learning rate");
    const auto& h = state.hyper;
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(h.beta1, t);
    const double bc2 = 1.0 - std::pow(h.beta2, t);
    for (std::size_t i = 0; i < n; ++i) {
        const double g = grads[i];
        double& m = state.first_moment[i];
        double& v = state.second_moment[i];
        m = h.beta1 * m + (1.0 - h.beta1) * g;
        v = h.beta2 * v + (1.0 - h.beta2) * g * g;
        const double m_hat = m / bc1;
        const double v_hat = v / bc2;
        params[i] -= lr * (m_hat / (std::sqrt(v_hat) + h.eps) + decay[i] * params[i]);
    }
}

double cosine_lr(std::size_t step, std::size_t total_steps, double lr0) {
    require(total_steps > 0, ErrorKind::kConfig, "cosine_lr: total_steps must be positive");
    require(step <= total_steps, ErrorKind::kContract, "cosine_lr: step beyond schedule");
    if (step == total_steps) return 0.0;
    const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
    return 0.5 * lr0 * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace cocole
