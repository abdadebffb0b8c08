#include "canon/tensor.hpp"

#include <cmath>
#include <unordered_set>

namespace canon {

namespace {
thread_local int g_no_grad_depth = 0;
}

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }
bool grad_enabled() { return g_no_grad_depth == 0; }

long numel(const std::vector<long>& shape) {
    long n = 1;
    for (long d : shape) {
        if (d <= 0) throw DimensionError("tensor extents must be positive");
        n *= d;
    }
    return n;
}

bool all_finite(std::span<const double> v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

Tensor Tensor::zeros(std::vector<long> shape, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->data.assign(std::size_t(numel(shape)), 0.0);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::full(std::vector<long> shape, double value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (double& x : t.node_->data) x = value;
    return t;
}

Tensor Tensor::from(std::vector<long> shape, std::vector<double> data, bool requires_grad) {
    if (long(data.size()) != numel(shape))
        throw DimensionError("data length does not match shape");
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from({}, {v}, requires_grad);
}

Tensor Tensor::randn(Rng& rng, std::vector<long> shape, double stddev, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (double& x : t.node_->data) x = rng.normal(0.0, stddev);
    return t;
}

std::span<const double> Tensor::grad() const {
    node_->ensure_grad();
    return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
}

double Tensor::value() const {
    if (size() != 1) throw DimensionError("value() requires a scalar tensor");
    return node_->data[0];
}

double Tensor::at(long i) const {
    if (rank() != 1) throw DimensionError("at(i) requires a rank-1 tensor");
    if (i < 0 || i >= dim(0)) throw IndexError("index out of range");
    return node_->data[std::size_t(i)];
}

double Tensor::at(long r, long c) const {
    if (rank() != 2) throw DimensionError("at(r,c) requires a rank-2 tensor");
    if (r < 0 || r >= dim(0) || c < 0 || c >= dim(1)) throw IndexError("index out of range");
    return node_->data[std::size_t(r * dim(1) + c)];
}

Tensor Tensor::clone(bool requires_grad) const {
    return Tensor::from(node_->shape, node_->data, requires_grad);
}

void Tensor::backward() const {
    if (!node_) throw EvalError("backward on empty tensor");
    if (size() != 1) throw DimensionError("backward requires a scalar root");

    // Iterative post-order DFS: children (parents in autodiff terms) are
    // emitted before the node that consumes them, so reversing the order
    // visits every node exactly once after all its consumers.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    struct Frame {
        Node* node;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    if (seen.insert(node_.get()).second) stack.push_back({node_.get(), 0});
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            Node* p = f.node->parents[f.next_parent++].get();
            if (seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    node_->ensure_grad();
    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (!n->requires_grad || !n->backward_fn) continue;
        for (auto& p : n->parents) {
            if (p->requires_grad) p->ensure_grad();
        }
        n->backward_fn(*n);
    }
}

}  // namespace canon
