#include "scg/optim.hpp"

#include <algorithm>
#include <cmath>

namespace scg {

double poly_factor(double iteration, double max_iter, double power)
{
    const double f = 1.0 - iteration / max_iter;
    return f <= 0 ? 0.0 : std::pow(f, power);
}

double learning_rate_at(const TrainConfig& config, std::size_t iteration, std::size_t epoch)
{
    const auto steps = static_cast<double>(epoch / config.step_epochs);
    return config.learning_rate * poly_factor(static_cast<double>(iteration), config.max_iter, config.poly_power) *
           std::pow(config.step_factor, steps);
}

template <typename T>
AmsGrad<T>::AmsGrad(const ParameterRegistry<T>& registry, const TrainConfig& config)
    : params_(registry.parameters()), config_(config)
{
    for (const auto& p : params_) {
        m_.emplace_back(p.tensor.numel(), T(0));
        v_.emplace_back(p.tensor.numel(), T(0));
        v_max_.emplace_back(p.tensor.numel(), T(0));
    }
}

template <typename T>
double AmsGrad<T>::group_learning_rate(ParamGroup group, double lr) const
{
    return group == ParamGroup::bias ? lr * config_.bias_lr_multiplier : lr;
}

template <typename T>
double AmsGrad<T>::group_weight_decay(ParamGroup group) const
{
    return group == ParamGroup::weight ? config_.weight_decay : 0.0;
}

template <typename T>
void AmsGrad<T>::step(double lr)
{
    ++t_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double bc1 = 1 - std::pow(b1, static_cast<double>(t_));
    const double bc2_sqrt = std::sqrt(1 - std::pow(b2, static_cast<double>(t_)));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto p = params_[k].tensor;
        if (!p.has_grad())
            continue;
        const T step_size = static_cast<T>(group_learning_rate(params_[k].group, lr) / bc1);
        const T wd = static_cast<T>(group_weight_decay(params_[k].group));
        const T eps = static_cast<T>(config_.adam_eps);
        auto w = p.values();
        const auto g = p.grad();
        auto& m = m_[k];
        auto& v = v_[k];
        auto& vm = v_max_[k];
        for (std::size_t i = 0; i < w.size(); ++i) {
            const T grad = g[i] + wd * w[i];
            m[i] = static_cast<T>(b1) * m[i] + static_cast<T>(1 - b1) * grad;
            v[i] = static_cast<T>(b2) * v[i] + static_cast<T>(1 - b2) * grad * grad;
            vm[i] = std::max(vm[i], v[i]);
            w[i] -= step_size * m[i] / (std::sqrt(vm[i]) / static_cast<T>(bc2_sqrt) + eps);
        }
    }
}

template class AmsGrad<float>;
template class AmsGrad<double>;

} // namespace scg
