#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "atx/errors.hpp"

namespace atx {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::uint64_t id = 0;      // creation order; higher ids depend only on lower ids
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and accumulates into parents' grads.
    std::function<void(Node&)> backward_fn;

    bool is_leaf() const { return !backward_fn; }
    std::vector<double>& grad_buffer();
};

}  // namespace detail

/// Dense row-major float64 tensor with an optional place in the autodiff graph.
///
/// Copies share storage (handle semantics), like a framework tensor. Leaves that
/// require grad are parameters; every op whose inputs require grad records a
/// backward closure, so the set of nodes reachable from a loss forms the tape.
/// Node ids increase monotonically, which makes descending-id order a valid
/// reverse topological order for the backward sweep.
class Tensor {
public:
    Tensor() = default;

    static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                         bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t dim() const { return shape().size(); }
    std::size_t size() const;
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const double> data() const;
    // Direct write access; only meant for leaves (optimizer updates, finite differences).
    std::span<double> mutable_data();
    double item() const;
    double at(std::size_t i) const { return data()[i]; }
    double at(std::size_t r, std::size_t c) const { return data()[r * cols() + c]; }

    bool requires_grad() const;
    bool has_grad() const;
    // Grad buffer, zero-filled view if nothing has been accumulated yet.
    std::vector<double> grad() const;
    void zero_grad();

    // Deep copy of values into a fresh leaf.
    Tensor clone(bool requires_grad) const;

    detail::Node* node() const { return node_.get(); }
    const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

    static Tensor make_result(Shape shape, std::vector<double> value,
                              std::vector<Tensor> inputs,
                              std::function<void(detail::Node&)> backward_fn);

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::Node> node_;
};

/// While alive on this thread, ops record no graph edges (inference mode).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

/// Runs the reverse sweep from a scalar loss. Leaf grads accumulate across calls;
/// intermediate grads are transient.
void backward(const Tensor& loss);

void check_finite(std::span<const double> values, const char* where);

}  // namespace atx
