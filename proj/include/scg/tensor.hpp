#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace scg {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One vertex of the reverse-mode tape. Non-leaf nodes own a backward rule
// that reads `grad` and accumulates into `inputs[i]->grad`.
template <typename T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    void ensure_grad()
    {
        if (grad.size() != value.size())
            grad.assign(value.size(), T(0));
    }
};

} // namespace detail

/// Thread-local switch for tape recording. Inference paths disable it.
class GradMode {
public:
    static bool enabled();
    static void set_enabled(bool on);
};

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Dense row-major array with an optional gradient slot.
///
/// Copies are shallow handles onto the same storage, so a parameter tensor
/// held by a layer and by an optimizer refers to one buffer. Every op returns
/// a fresh tensor; the only in-place mutations are gradient accumulation and
/// explicit writes through `values()` (initialisers, optimizers).
template <typename T>
class Tensor {
public:
    using value_type = T;
    using NodePtr = std::shared_ptr<detail::Node<T>>;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0), bool requires_grad = false);
    Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);
    explicit Tensor(NodePtr node) : node_(std::move(node)) {}

    static Tensor scalar(T v, bool requires_grad = false) { return Tensor(Shape{}, v, requires_grad); }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t size(std::size_t axis) const;
    std::size_t numel() const;

    std::span<T> values();
    std::span<const T> values() const;
    std::span<T> grad();
    std::span<const T> grad() const;
    bool has_grad() const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool on);

    T item() const;
    T operator[](std::size_t i) const { return values()[i]; }

    /// Reverse sweep from a single-element tensor; seeds d(self)/d(self) = 1.
    void backward() const;
    void zero_grad();

    /// Value copy with no tape history.
    Tensor detach() const;

    const char* op_name() const;
    const NodePtr& node() const { return node_; }

private:
    NodePtr node_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

} // namespace scg
