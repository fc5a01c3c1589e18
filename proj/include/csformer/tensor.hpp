#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csformer/error.hpp"

namespace csformer {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorImpl {
    Shape shape;
    std::vector<double> data; // row-major
    bool requires_grad = false;
    std::optional<std::vector<double>> grad;
};

} // namespace detail

// Dense f64 tensor with optional reverse-mode gradient tracking. Copies are
// shallow (shared storage); use clone() for an independent buffer.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor from_data(Shape shape, std::vector<double> data);
    static Tensor scalar(double value);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t size() const { return impl_->data.size(); }

    std::span<double> data() { return impl_->data; }
    std::span<const double> data() const { return impl_->data; }

    // Value of a rank-anything single-element tensor.
    double value() const;
    double at(std::initializer_list<std::size_t> index) const;

    bool requires_grad() const { return impl_ && impl_->requires_grad; }
    Tensor& set_requires_grad(bool on = true);

    bool has_grad() const { return impl_ && impl_->grad.has_value(); }
    // Gradient buffer, allocated (zero-filled) on first use.
    std::span<double> grad();
    std::span<const double> grad() const;
    void zero_grad();
    void drop_grad();

    // Deep copy of the values; no gradient, no history.
    Tensor clone() const;
    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

    std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }

private:
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<detail::TensorImpl> impl_;
};

// Ordered record of the operations of one forward pass. Each node keeps the
// tensors it touched alive and a rule that scatters the output gradient back
// to the inputs. Nodes are appended in execution order, so replaying the list
// backwards visits every node after all of its consumers.
class GradTape {
public:
    GradTape() = default;
    GradTape(const GradTape&) = delete;
    GradTape& operator=(const GradTape&) = delete;

    void record(std::vector<Tensor> inputs, Tensor output,
                std::function<void()> backward, const char* op_name);

    // Seeds d(loss)/d(loss) = 1 and runs every recorded rule once, in reverse
    // order. Calling it a second time without reset() is an error.
    void backward(const Tensor& loss);
    void reset();

    std::size_t node_count() const { return nodes_.size(); }

    static GradTape* active();

private:
    struct Node {
        std::vector<Tensor> inputs;
        Tensor output;
        std::function<void()> backward;
        const char* op_name;
    };
    std::vector<Node> nodes_;
    bool consumed_ = false;

    friend class TapeScope;
};

// Installs a tape as the recording target for the current thread. Ops record
// only while a scope is alive and at least one input requires gradients.
class TapeScope {
public:
    explicit TapeScope(GradTape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    GradTape* previous_;
};

// ---- Differentiable operations -------------------------------------------
//
// Batched matrix product. Leading axes must match exactly, or one operand may
// be a plain matrix (rank 2) that is broadcast over the other's batch axes.
Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise ops; shapes must match, or the smaller operand's shape must be
// a trailing suffix of the larger's (broadcast over leading batch axes).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& x);

// Row-stabilized softmax over the last axis. Throws NumericsError on NaN
// input rather than propagating it.
Tensor softmax_lastaxis(const Tensor& x);

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor reshape(const Tensor& x, Shape new_shape);

Tensor sum(const Tensor& x);  // -> scalar
Tensor mean(const Tensor& x); // -> scalar

bool has_nan(const Tensor& x);

// ---- Gradient verification ------------------------------------------------
//
// Compares the tape gradient of `f` against central finite differences for
// every component of every parameter. `f` must be a deterministic scalar
// function of `params` (evaluated with and without an active tape). Returns
// max over components of |analytic - numeric| / (|numeric| + 1e-8).
double finite_diff_check(const std::function<Tensor()>& f,
                         const std::vector<Tensor>& params,
                         double step = 1e-5);

} // namespace csformer
