#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cocole/error.hpp"

namespace cocole {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tape;

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until something flows into it
    bool requires_grad = false;
    Tape* tape = nullptr;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    std::vector<double>& ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
        return grad;
    }
};

}  // namespace detail

// Dense row-major float-64 tensor. A Tensor is a cheap handle; the value it
// refers to is immutable once the producing operation returns. Tensors that
// require gradients belong to exactly one Tape.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double value);
    static Tensor vector(std::vector<double> data);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    static Tensor zeros(Shape shape);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t size() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const double> data() const;
    std::vector<double> to_vector() const;
    double item() const;
    double operator[](std::size_t i) const { return data()[i]; }
    double at(std::size_t r, std::size_t c) const;

    bool requires_grad() const;
    bool has_grad() const;
    std::span<const double> grad() const;
    Tape* tape() const;

    // Value copy cut off from any graph.
    Tensor detach() const;

    const detail::Node* node() const { return node_.get(); }

private:
    friend class Tape;
    friend struct OpAccess;
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

    std::shared_ptr<detail::Node> node_;
};

// Define-by-run gradient graph: an ordered record of executed differentiable
// operations. One tape per forward pass; a tape must only be used from one
// thread.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Trainable leaf (requires_grad = true).
    Tensor leaf(Shape shape, std::vector<double> data);
    Tensor leaf(const Tensor& value);

    // Reverse traversal from a scalar loss. Populates grads of every leaf.
    // Calling twice without reset() is a contract error.
    void backward(const Tensor& loss);

    // Drops recorded operations and leaf gradients; leaves stay usable.
    void reset();

    std::size_t num_records() const { return records_.size(); }
    std::size_t num_leaves() const { return leaves_.size(); }
    bool backward_done() const { return backward_done_; }

    // Sweeps every recorded value and gradient for NaN/Inf.
    void check_finite() const;

private:
    friend struct OpAccess;
    void record(std::shared_ptr<detail::Node> node) { records_.push_back(std::move(node)); }

    std::vector<std::shared_ptr<detail::Node>> leaves_;
    std::vector<std::shared_ptr<detail::Node>> records_;
    bool backward_done_ = false;
};

// ---- differentiable operations ----
//
// Elementwise binary ops require equal shapes, or one side of size 1
// (scalar broadcast). Rank-1 tensors are treated as single rows by the
// row-wise ops.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);

Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);  // domain error on non-positive input
Tensor abs(const Tensor& a);
Tensor square(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor mean_rows(const Tensor& a);  // [L x D] -> [D]

Tensor softmax_rows(const Tensor& a);
// Row i only attends to columns 0..i; masked entries are exactly zero.
Tensor causal_softmax_rows(const Tensor& a);
Tensor log_softmax_rows(const Tensor& a);

Tensor l2_normalize(const Tensor& v);
Tensor dot(const Tensor& a, const Tensor& b);
Tensor cosine_sim(const Tensor& a, const Tensor& b);
Tensor sq_distance(const Tensor& a, const Tensor& b);

Tensor reshape(const Tensor& a, Shape shape);
Tensor element(const Tensor& a, std::size_t index);
Tensor row(const Tensor& a, std::size_t r);
// Stacks rank-1 [D] or rank-2 [r x D] pieces along rows.
Tensor concat_rows(std::span<const Tensor> pieces);
// Stacks scalars into a rank-1 tensor.
Tensor stack(std::span<const Tensor> scalars);
// Sum of a list of same-shaped tensors, in list order.
Tensor add_n(std::span<const Tensor> terms);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

}  // namespace cocole
