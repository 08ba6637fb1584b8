#pragma once

#include <cstddef>
#include <vector>

#include "scg/config.hpp"

namespace scg {

/// (1 − iteration/max_iter)^power, clamped at 0 past max_iter.
double poly_factor(double iteration, double max_iter, double power);

/// initial × poly(iteration) × step_factor^⌊epoch / step_epochs⌋.
double learning_rate_at(const TrainConfig& config, std::size_t iteration, std::size_t epoch);

/// Adam with the AMSGrad maximum, L2 weight decay folded into the gradient.
/// Per-group policy: weights get lr and weight decay; biases get
/// bias_lr_multiplier·lr and no decay; batch-norm affine terms get lr and no
/// decay.
template <typename T>
class AmsGrad {
public:
    AmsGrad(const ParameterRegistry<T>& registry, const TrainConfig& config);

    double group_learning_rate(ParamGroup group, double lr) const;
    double group_weight_decay(ParamGroup group) const;

    /// One update at base learning rate `lr` using the accumulated gradients.
    /// Parameters without a gradient are left untouched.
    void step(double lr);
    std::size_t steps() const { return t_; }

private:
    std::vector<NamedTensor<T>> params_;
    std::vector<std::vector<T>> m_, v_, v_max_;
    TrainConfig config_;
    std::size_t t_ = 0;
};

extern template class AmsGrad<float>;
extern template class AmsGrad<double>;

} // namespace scg
