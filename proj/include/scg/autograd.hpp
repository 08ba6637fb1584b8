#pragma once

// Helpers for defining tape-recorded ops outside ops.cpp.

#include <initializer_list>
#include <utility>

#include "scg/tensor.hpp"

namespace scg::detail {

template <typename T>
bool any_requires_grad(std::initializer_list<const Tensor<T>*> inputs)
{
    if (!GradMode::enabled())
        return false;
    for (const auto* t : inputs)
        if (t && t->requires_grad())
            return true;
    return false;
}

/// Wrap a computed value as an op result. The backward rule is attached only
/// when grad mode is on and some input requires a gradient; it receives the
/// result node, whose `inputs` follow the order given here (undefined tensors
/// are stored as null).
template <typename T, typename Backward>
Tensor<T> make_op(const char* name, Shape shape, std::vector<T> value, std::initializer_list<const Tensor<T>*> inputs,
                  Backward&& backward)
{
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->op = name;
    if (any_requires_grad<T>(inputs)) {
        node->requires_grad = true;
        for (const auto* t : inputs)
            node->inputs.push_back(t && t->defined() && t->requires_grad() ? t->node() : nullptr);
        node->backward = std::forward<Backward>(backward);
    }
    return Tensor<T>(std::move(node));
}

/// Gradient buffer of input `i`, or null when that input does not need one.
template <typename T>
T* input_grad(Node<T>& self, std::size_t i)
{
    auto& in = self.inputs[i];
    if (!in)
        return nullptr;
    in->ensure_grad();
    return in->grad.data();
}

} // namespace scg::detail
