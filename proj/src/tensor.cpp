#include "cocole/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cocole/kernels.hpp"

namespace cocole {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

namespace {

void validate_shape(const Shape& shape, std::size_t n) {
    require(!shape.empty(), ErrorKind::kDimension, "tensor shape must have at least one dimension");
    for (auto d : shape)
        require(d > 0, ErrorKind::kDimension, "tensor dimensions must be positive, got " + shape_str(shape));
    require(shape_size(shape) == n, ErrorKind::kDimension,
            "shape " + shape_str(shape) + " does not match " + std::to_string(n) + " values");
}

void check_values(const std::vector<double>& v, const char* op) {
    for (double x : v)
        if (!std::isfinite(x)) fail(ErrorKind::kNonFinite, std::string("non-finite value produced by ") + op);
}

}  // namespace

struct OpAccess {
    static const NodePtr& node(const Tensor& t) {
        require(t.defined(), ErrorKind::kContract, "use of an undefined tensor");
        return t.node_;
    }

    // Builds the output node. When no input requires a gradient the result is
    // a plain constant and the backward rule is dropped.
    static Tensor make(const char* op, Shape shape, std::vector<double> value,
                       std::initializer_list<const Tensor*> inputs, std::function<void(Node&)> backward) {
        std::vector<NodePtr> ins;
        ins.reserve(inputs.size());
        for (const Tensor* t : inputs) ins.push_back(node(*t));
        return make(op, std::move(shape), std::move(value), std::move(ins), std::move(backward));
    }

    static Tensor make(const char* op, Shape shape, std::vector<double> value, std::vector<NodePtr> ins,
                       std::function<void(Node&)> backward) {
        check_values(value, op);
        auto out = std::make_shared<Node>();
        out->shape = std::move(shape);
        out->value = std::move(value);
        out->op = op;
        Tape* tape = nullptr;
        for (const auto& in : ins) {
            if (!in->requires_grad) continue;
            if (tape && in->tape != tape)
                fail(ErrorKind::kContract, std::string(op) + ": inputs belong to different tapes");
            tape = in->tape;
        }
        if (tape) {
            out->requires_grad = true;
            out->tape = tape;
            out->inputs = std::move(ins);
            out->backward = std::move(backward);
            tape->record(out);
        }
        return Tensor(out);
    }
};

// ---- Tensor ----

Tensor::Tensor(Shape shape, std::vector<double> data) {
    validate_shape(shape, data.size());
    check_values(data, "constructor");
    node_ = std::make_shared<Node>();
    node_->shape = std::move(shape);
    node_->value = std::move(data);
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }
Tensor Tensor::vector(std::vector<double> data) {
    const auto n = data.size();
    return Tensor({n}, std::move(data));
}
Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
    return Tensor({rows, cols}, std::move(data));
}
Tensor Tensor::zeros(Shape shape) {
    const auto n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

const Shape& Tensor::shape() const { return OpAccess::node(*this)->shape; }
std::size_t Tensor::size() const { return OpAccess::node(*this)->value.size(); }

std::size_t Tensor::rows() const {
    const auto& s = shape();
    return s.size() == 1 ? 1 : s[0];
}
std::size_t Tensor::cols() const {
    const auto& s = shape();
    return s.size() == 1 ? s[0] : s[1];
}

std::span<const double> Tensor::data() const { return OpAccess::node(*this)->value; }
std::vector<double> Tensor::to_vector() const { return OpAccess::node(*this)->value; }

double Tensor::item() const {
    require(size() == 1, ErrorKind::kContract, "item() on non-scalar tensor " + shape_str(shape()));
    return node_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const { return data()[r * cols() + c]; }

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
    require(has_grad(), ErrorKind::kContract, "tensor has no gradient buffer");
    return node_->grad;
}

Tape* Tensor::tape() const { return node_ ? node_->tape : nullptr; }

Tensor Tensor::detach() const { return Tensor(shape(), to_vector()); }

// ---- Tape ----

Tensor Tape::leaf(Shape shape, std::vector<double> data) {
    validate_shape(shape, data.size());
    check_values(data, "leaf");
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = true;
    n->tape = this;
    leaves_.push_back(n);
    return Tensor(n);
}

Tensor Tape::leaf(const Tensor& value) { return leaf(value.shape(), value.to_vector()); }

void Tape::backward(const Tensor& loss) {
    require(!backward_done_, ErrorKind::kContract, "backward() called twice without reset()");
    require(loss.defined() && loss.size() == 1, ErrorKind::kContract,
            "backward() needs a scalar loss, got " + (loss.defined() ? shape_str(loss.shape()) : "undefined"));
    if (loss.requires_grad())
        require(loss.tape() == this, ErrorKind::kContract, "loss was produced on a different tape");
    backward_done_ = true;
    for (auto& l : leaves_) l->ensure_grad();
    if (!loss.requires_grad()) return;

    Node* root = OpAccess::node(loss).get();
    root->ensure_grad()[0] += 1.0;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
        Node& n = **it;
        if (n.grad.empty() || !n.backward) continue;
        n.backward(n);
    }
}

void Tape::reset() {
    records_.clear();
    for (auto& l : leaves_) l->grad.clear();
    backward_done_ = false;
}

void Tape::check_finite() const {
    auto sweep = [](const std::vector<NodePtr>& nodes) {
        for (const auto& n : nodes) {
            check_values(n->value, n->op);
            check_values(n->grad, n->op);
        }
    };
    sweep(leaves_);
    sweep(records_);
}

// ---- operations ----

namespace {

Node& in(Node& out, std::size_t i) { return *out.inputs[i]; }

struct Broadcast {
    Shape shape;
    bool a_scalar = false;
    bool b_scalar = false;
};

Broadcast broadcast(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() == b.shape()) return {a.shape(), false, false};
    if (a.size() == 1) return {b.shape(), true, false};
    if (b.size() == 1) return {a.shape(), false, true};
    fail(ErrorKind::kDimension,
         std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
}

// Accumulates d into the input gradient, summing when that input was a
// broadcast scalar.
void accumulate(Node& input, const std::vector<double>& d, bool was_scalar) {
    if (!input.requires_grad) return;
    auto& g = input.ensure_grad();
    if (was_scalar) {
        double s = 0.0;
        for (double x : d) s += x;
        g[0] += s;
    } else {
        for (std::size_t i = 0; i < d.size(); ++i) g[i] += d[i];
    }
}

template <typename F>
std::vector<double> zip(const Tensor& a, const Tensor& b, const Broadcast& bc, F f) {
    const auto n = shape_size(bc.shape);
    auto av = a.data();
    auto bv = b.data();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = f(av[bc.a_scalar ? 0 : i], bv[bc.b_scalar ? 0 : i]);
    return out;
}

void require_matrix(const Tensor& t, const char* op) {
    require(t.rank() == 2, ErrorKind::kDimension,
            std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    const auto m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    require(b.shape()[0] == k, ErrorKind::kDimension,
            "matmul: inner dimensions differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    std::vector<double> c(m * n, 0.0);
    kernels::gemm_nn(a.data(), b.data(), c, m, k, n);
    return OpAccess::make("matmul", {m, n}, std::move(c), {&a, &b}, [m, k, n](Node& out) {
        Node& A = in(out, 0);
        Node& B = in(out, 1);
        if (A.requires_grad) kernels::gemm_nt(out.grad, B.value, A.ensure_grad(), m, n, k);
        if (B.requires_grad) kernels::gemm_tn(A.value, out.grad, B.ensure_grad(), m, k, n);
    });
}

Tensor transpose(const Tensor& a) {
    require_matrix(a, "transpose");
    const auto r = a.shape()[0], c = a.shape()[1];
    std::vector<double> out(r * c);
    auto v = a.data();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = v[i * c + j];
    return OpAccess::make("transpose", {c, r}, std::move(out), {&a}, [r, c](Node& o) {
        Node& A = in(o, 0);
        auto& g = A.ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) g[i * c + j] += o.grad[j * r + i];
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    auto bc = broadcast(a, b, "add");
    auto v = zip(a, b, bc, [](double x, double y) { return x + y; });
    return OpAccess::make("add", bc.shape, std::move(v), {&a, &b}, [bc](Node& o) {
        accumulate(in(o, 0), o.grad, bc.a_scalar);
        accumulate(in(o, 1), o.grad, bc.b_scalar);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    auto bc = broadcast(a, b, "sub");
    auto v = zip(a, b, bc, [](double x, double y) { return x - y; });
    return OpAccess::make("sub", bc.shape, std::move(v), {&a, &b}, [bc](Node& o) {
        accumulate(in(o, 0), o.grad, bc.a_scalar);
        std::vector<double> d(o.grad.size());
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = -o.grad[i];
        accumulate(in(o, 1), d, bc.b_scalar);
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    auto bc = broadcast(a, b, "mul");
    auto v = zip(a, b, bc, [](double x, double y) { return x * y; });
    return OpAccess::make("mul", bc.shape, std::move(v), {&a, &b}, [bc](Node& o) {
        Node& A = in(o, 0);
        Node& B = in(o, 1);
        const auto n = o.grad.size();
        if (A.requires_grad) {
            std::vector<double> d(n);
            for (std::size_t i = 0; i < n; ++i) d[i] = o.grad[i] * B.value[bc.b_scalar ? 0 : i];
            accumulate(A, d, bc.a_scalar);
        }
        if (B.requires_grad) {
            std::vector<double> d(n);
            for (std::size_t i = 0; i < n; ++i) d[i] = o.grad[i] * A.value[bc.a_scalar ? 0 : i];
            accumulate(B, d, bc.b_scalar);
        }
    });
}

Tensor scale(const Tensor& a, double s) {
    auto v = a.to_vector();
    for (double& x : v) x *= s;
    return OpAccess::make("scale", a.shape(), std::move(v), {&a}, [s](Node& o) {
        auto& g = in(o, 0).ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * o.grad[i];
    });
}

Tensor add_scalar(const Tensor& a, double s) {
    auto v = a.to_vector();
    for (double& x : v) x += s;
    return OpAccess::make("add_scalar", a.shape(), std::move(v), {&a}, [](Node& o) {
        auto& g = in(o, 0).ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

namespace {

// Elementwise op whose derivative is expressed through input x and output y.
template <typename F, typename D>
Tensor unary(const char* op, const Tensor& a, F f, D dfdx) {
    auto v = a.to_vector();
    for (double& x : v) x = f(x);
    return OpAccess::make(op, a.shape(), std::move(v), {&a}, [dfdx](Node& o) {
        Node& A = in(o, 0);
        auto& g = A.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * dfdx(A.value[i], o.value[i]);
    });
}

}  // namespace

Tensor tanh(const Tensor& a) {
    return unary("tanh", a, [](double x) { return std::tanh(x); },
                 [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& a) {
    return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    for (double x : a.data())
        require(x > 0.0, ErrorKind::kDomain, "log of non-positive value " + std::to_string(x));
    return unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor abs(const Tensor& a) {
    return unary("abs", a, [](double x) { return std::fabs(x); },
                 [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor square(const Tensor& a) {
    return unary("square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double x : a.data()) s += x;
    return OpAccess::make("sum", {1}, {s}, {&a}, [](Node& o) {
        auto& g = in(o, 0).ensure_grad();
        for (double& x : g) x += o.grad[0];
    });
}

Tensor mean(const Tensor& a) {
    const double n = static_cast<double>(a.size());
    double s = 0.0;
    for (double x : a.data()) s += x;
    return OpAccess::make("mean", {1}, {s / n}, {&a}, [n](Node& o) {
        auto& g = in(o, 0).ensure_grad();
        for (double& x : g) x += o.grad[0] / n;
    });
}

Tensor mean_rows(const Tensor& a) {
    const auto r = a.rows(), c = a.cols();
    std::vector<double> out(c, 0.0);
    auto v = a.data();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j] += v[i * c + j];
    for (double& x : out) x /= static_cast<double>(r);
    return OpAccess::make("mean_rows", {c}, std::move(out), {&a}, [r, c](Node& o) {
        auto& g = in(o, 0).ensure_grad();
        const double inv = 1.0 / static_cast<double>(r);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) g[i * c + j] += o.grad[j] * inv;
    });
}

namespace {

// Row softmax over the first `width(i)` columns of row i; the rest are zero.
template <typename Width>
std::vector<double> softmax_forward(const Tensor& a, Width width) {
    const auto r = a.rows(), c = a.cols();
    auto v = a.data();
    std::vector<double> out(r * c, 0.0);
    for (std::size_t i = 0; i < r; ++i) {
        const std::size_t w = width(i);
        const double* x = v.data() + i * c;
        double* y = out.data() + i * c;
        const double mx = *std::max_element(x, x + w);
        double z = 0.0;
        for (std::size_t j = 0; j < w; ++j) z += (y[j] = std::exp(x[j] - mx));
        for (std::size_t j = 0; j < w; ++j) y[j] /= z;
    }
    return out;
}

void softmax_backward(Node& o, std::size_t r, std::size_t c) {
    auto& g = in(o, 0).ensure_grad();
    for (std::size_t i = 0; i < r; ++i) {
        const double* y = o.value.data() + i * c;
        const double* dy = o.grad.data() + i * c;
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += y[j] * dy[j];
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += y[j] * (dy[j] - dot);
    }
}

}  // namespace

Tensor softmax_rows(const Tensor& a) {
    const auto r = a.rows(), c = a.cols();
    auto out = softmax_forward(a, [c](std::size_t) { return c; });
    return OpAccess::make("softmax_rows", a.shape(), std::move(out), {&a},
                          [r, c](Node& o) { softmax_backward(o, r, c); });
}

Tensor causal_softmax_rows(const Tensor& a) {
    require_matrix(a, "causal_softmax_rows");
    const auto r = a.rows(), c = a.cols();
    require(r <= c, ErrorKind::kDimension, "causal_softmax_rows: more rows than columns");
    auto out = softmax_forward(a, [](std::size_t i) { return i + 1; });
    return OpAccess::make("causal_softmax_rows", a.shape(), std::move(out), {&a},
                          [r, c](Node& o) { softmax_backward(o, r, c); });
}

Tensor log_softmax_rows(const Tensor& a) {
    const auto r = a.rows(), c = a.cols();
    auto v = a.data();
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i) {
        const double* x = v.data() + i * c;
        const double mx = *std::max_element(x, x + c);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(x[j] - mx);
        const double lse = mx + std::log(z);
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x[j] - lse;
    }
    return OpAccess::make("log_softmax_rows", a.shape(), std::move(out), {&a}, [r, c](Node& o) {
        auto& g = in(o, 0).ensure_grad();
        for (std::size_t i = 0; i < r; ++i) {
            const double* y = o.value.data() + i * c;
            const double* dy = o.grad.data() + i * c;
            double s = 0.0;
            for (std::size_t j = 0; j < c; ++j) s += dy[j];
            for (std::size_t j = 0; j < c; ++j) g[i * c + j] += dy[j] - std::exp(y[j]) * s;
        }
    });
}

namespace {

double norm2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace

Tensor l2_normalize(const Tensor& v) {
    const double n = norm2(v.data());
    require(n > 0.0, ErrorKind::kDegenerateInput, "l2_normalize: zero vector");
    auto out = v.to_vector();
    for (double& x : out) x /= n;
    return OpAccess::make("l2_normalize", v.shape(), std::move(out), {&v}, [n](Node& o) {
        auto& g = in(o, 0).ensure_grad();
        double yd = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) yd += o.value[i] * o.grad[i];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += (o.grad[i] - o.value[i] * yd) / n;
    });
}

Tensor dot(const Tensor& a, const Tensor& b) {
    require(a.size() == b.size(), ErrorKind::kDimension,
            "dot: sizes differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    double s = 0.0;
    auto av = a.data(), bv = b.data();
    for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
    return OpAccess::make("dot", {1}, {s}, {&a, &b}, [](Node& o) {
        Node& A = in(o, 0);
        Node& B = in(o, 1);
        const double g = o.grad[0];
        if (A.requires_grad) {
            auto& ga = A.ensure_grad();
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * B.value[i];
        }
        if (B.requires_grad) {
            auto& gb = B.ensure_grad();
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * A.value[i];
        }
    });
}

Tensor cosine_sim(const Tensor& a, const Tensor& b) {
    require(a.size() == b.size(), ErrorKind::kDimension,
            "cosine_sim: sizes differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const double na = norm2(a.data()), nb = norm2(b.data());
    require(na > 0.0 && nb > 0.0, ErrorKind::kDegenerateInput, "cosine_sim: zero-norm input");
    double d = 0.0;
    auto av = a.data(), bv = b.data();
    for (std::size_t i = 0; i < av.size(); ++i) d += av[i] * bv[i];
    const double cs = std::clamp(d / (na * nb), -1.0, 1.0);
    return OpAccess::make("cosine_sim", {1}, {cs}, {&a, &b}, [na, nb, d](Node& o) {
        Node& A = in(o, 0);
        Node& B = in(o, 1);
        const double g = o.grad[0];
        const double c = d / (na * nb);
        if (A.requires_grad) {
            auto& ga = A.ensure_grad();
            for (std::size_t i = 0; i < ga.size(); ++i)
                ga[i] += g * (B.value[i] / (na * nb) - c * A.value[i] / (na * na));
        }
        if (B.requires_grad) {
            auto& gb = B.ensure_grad();
            for (std::size_t i = 0; i < gb.size(); ++i)
                gb[i] += g * (A.value[i] / (na * nb) - c * B.value[i] / (nb * nb));
        }
    });
}

Tensor sq_distance(const Tensor& a, const Tensor& b) {
    require(a.size() == b.size(), ErrorKind::kDimension,
            "sq_distance: sizes differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    auto av = a.data(), bv = b.data();
    double s = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) s += (av[i] - bv[i]) * (av[i] - bv[i]);
    return OpAccess::make("sq_distance", {1}, {s}, {&a, &b}, [](Node& o) {
        Node& A = in(o, 0);
        Node& B = in(o, 1);
        const double g = o.grad[0];
        const auto n = A.value.size();
        if (A.requires_grad) {
            auto& ga = A.ensure_grad();
            for (std::size_t i = 0; i < n; ++i) ga[i] += 2.0 * g * (A.value[i] - B.value[i]);
        }
        if (B.requires_grad) {
            auto& gb = B.ensure_grad();
            for (std::size_t i = 0; i < n; ++i) gb[i] -= 2.0 * g * (A.value[i] - B.value[i]);
        }
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    validate_shape(shape, a.size());
    return OpAccess::make("reshape", std::move(shape), a.to_vector(), {&a}, [](Node& o) {
        auto& g = in(o, 0).ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    });
}

Tensor element(const Tensor& a, std::size_t index) {
    require(index < a.size(), ErrorKind::kDimension, "element: index out of range");
    return OpAccess::make("element", {1}, {a.data()[index]}, {&a},
                          [index](Node& o) { in(o, 0).ensure_grad()[index] += o.grad[0]; });
}

Tensor row(const Tensor& a, std::size_t r) {
    require(r < a.rows(), ErrorKind::kDimension, "row: index out of range");
    const auto c = a.cols();
    auto v = a.data();
    std::vector<double> out(v.begin() + static_cast<std::ptrdiff_t>(r * c),
                            v.begin() + static_cast<std::ptrdiff_t>((r + 1) * c));
    return OpAccess::make("row", {c}, std::move(out), {&a}, [r, c](Node& o) {
        auto& g = in(o, 0).ensure_grad();
        for (std::size_t j = 0; j < c; ++j) g[r * c + j] += o.grad[j];
    });
}

Tensor concat_rows(std::span<const Tensor> pieces) {
    require(!pieces.empty(), ErrorKind::kDimension, "concat_rows: no pieces");
    const auto c = pieces.front().cols();
    std::size_t total_rows = 0;
    std::vector<NodePtr> ins;
    ins.reserve(pieces.size());
    for (const auto& p : pieces) {
        require(p.rank() <= 2 && p.cols() == c, ErrorKind::kDimension,
                "concat_rows: piece " + shape_str(p.shape()) + " does not have " + std::to_string(c) + " columns");
        total_rows += p.rows();
        ins.push_back(OpAccess::node(p));
    }
    std::vector<double> out;
    out.reserve(total_rows * c);
    for (const auto& p : pieces) out.insert(out.end(), p.data().begin(), p.data().end());
    return OpAccess::make("concat_rows", {total_rows, c}, std::move(out), std::move(ins), [](Node& o) {
        std::size_t offset = 0;
        for (auto& p : o.inputs) {
            const auto n = p->value.size();
            if (p->requires_grad) {
                auto& g = p->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) g[i] += o.grad[offset + i];
            }
            offset += n;
        }
    });
}

Tensor stack(std::span<const Tensor> scalars) {
    require(!scalars.empty(), ErrorKind::kDimension, "stack: no inputs");
    std::vector<NodePtr> ins;
    std::vector<double> out;
    for (const auto& s : scalars) {
        require(s.size() == 1, ErrorKind::kDimension, "stack: inputs must be scalars");
        out.push_back(s.item());
        ins.push_back(OpAccess::node(s));
    }
    const auto n = out.size();
    return OpAccess::make("stack", {n}, std::move(out), std::move(ins), [](Node& o) {
        for (std::size_t i = 0; i < o.inputs.size(); ++i)
            if (o.inputs[i]->requires_grad) o.inputs[i]->ensure_grad()[0] += o.grad[i];
    });
}

Tensor add_n(std::span<const Tensor> terms) {
    require(!terms.empty(), ErrorKind::kDimension, "add_n: no inputs");
    const auto& shape = terms.front().shape();
    std::vector<double> out(shape_size(shape), 0.0);
    std::vector<NodePtr> ins;
    for (const auto& t : terms) {
        require(t.shape() == shape, ErrorKind::kDimension, "add_n: shape mismatch");
        auto v = t.data();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
        ins.push_back(OpAccess::node(t));
    }
    return OpAccess::make("add_n", shape, std::move(out), std::move(ins), [](Node& o) {
        for (auto& p : o.inputs) {
            if (!p->requires_grad) continue;
            auto& g = p->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
        }
    });
}

}  // namespace cocole
