#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "canon/errors.hpp"
#include "canon/rng.hpp"

namespace canon {

// Row-major dense tensor of 64-bit floats with reverse-mode autodiff.
// Tensor is a shared handle to a graph node; ops build the graph and
// backward() walks it once in reverse topological order.
class Tensor {
  public:
    struct Node {
        std::vector<long> shape;
        std::vector<double> data;
        std::vector<double> grad;  // sized lazily, same length as data
        bool requires_grad = false;
        std::vector<std::shared_ptr<Node>> parents;
        std::function<void(Node&)> backward_fn;  // accumulates into parents
        const char* op = "leaf";

        std::size_t size() const { return data.size(); }
        void ensure_grad() {
            if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
        }
    };

    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    static Tensor zeros(std::vector<long> shape, bool requires_grad = false);
    static Tensor full(std::vector<long> shape, double value, bool requires_grad = false);
    static Tensor from(std::vector<long> shape, std::vector<double> data,
                       bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor randn(Rng& rng, std::vector<long> shape, double stddev,
                        bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<long>& shape() const { return node_->shape; }
    long rank() const { return long(node_->shape.size()); }
    long dim(long i) const { return node_->shape[std::size_t(i)]; }
    std::size_t size() const { return node_->data.size(); }
    bool requires_grad() const { return node_->requires_grad; }

    std::span<const double> data() const { return node_->data; }
    std::span<double> mutable_data() { return node_->data; }
    std::span<const double> grad() const;
    std::span<double> mutable_grad();

    double value() const;              // scalar tensors only
    double at(long i) const;           // rank-1
    double at(long r, long c) const;   // rank-2

    void zero_grad() { if (node_) node_->grad.assign(node_->data.size(), 0.0); }
    void backward() const;  // scalar roots only

    // Deep copy of the values (no graph history, leaf result).
    Tensor clone(bool requires_grad = false) const;

    std::shared_ptr<Node> node() const { return node_; }
    Node* raw() const { return node_.get(); }

  private:
    std::shared_ptr<Node> node_;
};

// While a guard is alive, ops produce constant results with no graph history.
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

long numel(const std::vector<long>& shape);
bool all_finite(std::span<const double> v);

// ---------------------------------------------------------------------------
// Ops. All differentiable unless noted. Shapes are validated and mismatches
// raise DimensionError; out-of-range indices raise IndexError.
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor neg(const Tensor& a);
Tensor vexp(const Tensor& a);
Tensor vabs(const Tensor& a);
Tensor vtanh(const Tensor& a);

// [n][k] x [k][m] -> [n][m]
Tensor matmul(const Tensor& a, const Tensor& b);
// [n][k] x [m][k]^T -> [n][m]
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// mat [n][d] + bias [d], broadcast over rows
Tensor add_bias(const Tensor& mat, const Tensor& bias);

// rows of a [R][d] table -> [len(ids)][d]; backward scatters
Tensor gather_rows(const Tensor& table, const std::vector<long>& ids);
// base [R][d] with delta [S][d] added at the given rows; gradient flows to
// delta only (base is treated as constant even if it requires grad)
Tensor overlay_rows(const Tensor& base, const Tensor& delta, const std::vector<long>& rows);

// Row r is softmaxed over its first prefix[r] entries; the rest are zero.
Tensor prefix_softmax(const Tensor& mat, const std::vector<long>& prefix);
// Stabilized log-softmax over the last dimension (rank 1 or 2).
Tensor log_softmax(const Tensor& x);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
Tensor gelu(const Tensor& x);

Tensor col_slice(const Tensor& x, long c0, long c1);
Tensor concat_cols(const std::vector<Tensor>& parts);
// out[:, j] = x[:, perm[j]]
Tensor permute_cols(const Tensor& x, const std::vector<long>& perm);

// Sum of mat[r][c] over the given cells -> scalar.
Tensor pick_sum(const Tensor& mat, const std::vector<std::pair<long, long>>& cells);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

// -log softmax(logits)[target]; logits rank-1. Stabilized by max-subtraction.
Tensor softmax_cross_entropy(const Tensor& logits, long target);

}  // namespace canon
