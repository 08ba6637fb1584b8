#include "scg/tensor.hpp"

#include <sstream>
#include <unordered_set>

#include "scg/error.hpp"

namespace scg {

std::size_t shape_numel(const Shape& shape)
{
    std::size_t n = 1;
    for (auto e : shape)
        n *= e;
    return n;
}

std::string shape_str(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i)
        os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool on) { g_grad_enabled = on; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill, bool requires_grad) : node_(std::make_shared<detail::Node<T>>())
{
    for (auto e : shape)
        if (e == 0)
            throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
    node_->value.assign(shape_numel(shape), fill);
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad)
    : node_(std::make_shared<detail::Node<T>>())
{
    if (values.size() != shape_numel(shape))
        throw DimensionError("tensor of shape " + shape_str(shape) + " needs " + std::to_string(shape_numel(shape)) +
                             " values, got " + std::to_string(values.size()));
    for (auto e : shape)
        if (e == 0)
            throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
    node_->value = std::move(values);
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
}

template <typename T>
const Shape& Tensor<T>::shape() const
{
    return node_->shape;
}

template <typename T>
std::size_t Tensor<T>::size(std::size_t axis) const
{
    if (axis >= rank())
        throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape()));
    return node_->shape[axis];
}

template <typename T>
std::size_t Tensor<T>::numel() const
{
    return node_->value.size();
}

template <typename T>
std::span<T> Tensor<T>::values()
{
    return node_->value;
}

template <typename T>
std::span<const T> Tensor<T>::values() const
{
    return node_->value;
}

template <typename T>
std::span<T> Tensor<T>::grad()
{
    return node_->grad;
}

template <typename T>
std::span<const T> Tensor<T>::grad() const
{
    return node_->grad;
}

template <typename T>
bool Tensor<T>::has_grad() const
{
    return defined() && node_->grad.size() == node_->value.size();
}

template <typename T>
bool Tensor<T>::requires_grad() const
{
    return defined() && node_->requires_grad;
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on)
{
    node_->requires_grad = on;
    return *this;
}

template <typename T>
T Tensor<T>::item() const
{
    if (numel() != 1)
        throw DimensionError("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
}

template <typename T>
void Tensor<T>::backward() const
{
    if (numel() != 1)
        throw DimensionError("backward() needs a single-element tensor, got " + shape_str(shape()));
    if (!node_->requires_grad)
        return;

    // Iterative post-order DFS yields a topological order without recursion
    // depth limits on long tapes.
    std::vector<NodePtr> order;
    std::unordered_set<detail::Node<T>*> seen;
    std::vector<std::pair<NodePtr, std::size_t>> stack{{node_, 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->inputs.size()) {
            const auto& child = n->inputs[next++];
            if (child && child->requires_grad && seen.insert(child.get()).second)
                stack.emplace_back(child, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    node_->ensure_grad();
    node_->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        auto& n = *it;
        if (!n->backward)
            continue;
        if (n->grad.size() == n->value.size())
            n->backward(*n);
        // Interior buffers are released once propagated.
        n->backward = nullptr;
        n->inputs.clear();
        std::vector<T>().swap(n->grad);
    }
}

template <typename T>
void Tensor<T>::zero_grad()
{
    if (defined())
        std::vector<T>().swap(node_->grad);
}

template <typename T>
Tensor<T> Tensor<T>::detach() const
{
    auto n = std::make_shared<detail::Node<T>>();
    n->shape = node_->shape;
    n->value = node_->value;
    return Tensor(std::move(n));
}

template <typename T>
const char* Tensor<T>::op_name() const
{
    return node_->op;
}

template class Tensor<float>;
template class Tensor<double>;

} // namespace scg
