#include "atx/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace atx {

namespace {

std::uint64_t next_id() {
    static std::atomic<std::uint64_t> counter{0};
    return ++counter;
}

thread_local bool g_grad_enabled = true;

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

void check_finite(std::span<const double> values, const char* where) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string("non-finite value produced by ") + where);
        }
    }
}

std::vector<double>& detail::Node::grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
    if (numel(shape) != data.size()) {
        throw ShapeError("tensor shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
    }
    check_finite(data, "tensor construction");
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(data);
    node->requires_grad = requires_grad;
    node->id = next_id();
    return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    std::vector<double> data(numel(shape), value);
    return from(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows, bool requires_grad) {
    std::size_t r = rows.size();
    std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("ragged matrix literal");
        data.insert(data.end(), row.begin(), row.end());
    }
    return from({r, c}, std::move(data), requires_grad);
}

const Shape& Tensor::shape() const {
    if (!node_) throw ContractError("use of undefined tensor");
    return node_->shape;
}

std::size_t Tensor::size() const { return node_ ? node_->value.size() : 0; }

std::size_t Tensor::rows() const {
    const auto& s = shape();
    if (s.size() != 2) throw ShapeError("expected matrix, got " + shape_str(s));
    return s[0];
}

std::size_t Tensor::cols() const {
    const auto& s = shape();
    if (s.size() != 2) throw ShapeError("expected matrix, got " + shape_str(s));
    return s[1];
}

std::span<const double> Tensor::data() const {
    if (!node_) throw ContractError("use of undefined tensor");
    return node_->value;
}

std::span<double> Tensor::mutable_data() {
    if (!node_) throw ContractError("use of undefined tensor");
    return node_->value;
}

double Tensor::item() const {
    if (size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::vector<double> Tensor::grad() const {
    if (!node_) throw ContractError("use of undefined tensor");
    if (node_->grad.empty()) return std::vector<double>(node_->value.size(), 0.0);
    return node_->grad;
}

void Tensor::zero_grad() {
    if (node_) node_->grad.clear();
}

Tensor Tensor::clone(bool requires_grad) const {
    return from(shape(), std::vector<double>(data().begin(), data().end()), requires_grad);
}

Tensor Tensor::make_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                           std::function<void(detail::Node&)> backward_fn) {
    check_finite(value, "tensor op");
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->id = next_id();
    bool any = g_grad_enabled && std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
    if (any) {
        node->requires_grad = true;
        for (auto& t : inputs) node->parents.push_back(t.node_);
        node->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(node));
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1) {
        throw ContractError("backward() requires a scalar loss");
    }
    detail::Node* root = loss.node();
    if (!root->requires_grad) return;

    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<detail::Node*> stack{root};
    while (!stack.empty()) {
        auto* n = stack.back();
        stack.pop_back();
        if (!seen.insert(n).second) continue;
        order.push_back(n);
        for (auto& p : n->parents) {
            if (p->requires_grad) stack.push_back(p.get());
        }
    }
    std::sort(order.begin(), order.end(),
              [](const detail::Node* a, const detail::Node* b) { return a->id > b->id; });

    for (auto* n : order) {
        if (!n->is_leaf()) n->grad.clear();
    }
    root->grad_buffer()[0] += 1.0;
    for (auto* n : order) {
        if (n->is_leaf()) continue;
        if (!n->grad.empty()) n->backward_fn(*n);
        n->grad.clear();
        n->grad.shrink_to_fit();
    }
}

}  // namespace atx
