#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace curriseg {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl;

// One step of the recorded computation. Nodes are created in dataflow order,
// so walking reachable nodes by descending id is a reverse topological order.
struct GradNode {
    uint64_t id = 0;
    std::vector<std::shared_ptr<GradNode>> inputs;
    std::function<void()> backward;
};

struct TensorImpl {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::shared_ptr<GradNode> node;  // set iff produced by a tracked op
};

// Dense N-D array of doubles. Copying a Tensor copies the handle, not the
// buffer; values are immutable once an op has consumed them, only grad
// buffers are written after construction.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor from(Shape shape, std::vector<double> values);
    static Tensor scalar(double value);
    static Tensor randn(Shape shape, std::mt19937_64& rng, double stddev = 1.0);
    static Tensor rand_uniform(Shape shape, std::mt19937_64& rng, double lo, double hi);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int64_t numel() const { return static_cast<int64_t>(impl_->values.size()); }

    double* data() { return impl_->values.data(); }
    const double* data() const { return impl_->values.data(); }
    std::vector<double>& values() { return impl_->values; }
    const std::vector<double>& values() const { return impl_->values; }

    // Scalar read; throws unless numel() == 1.
    double item() const;

    Tensor& set_requires_grad(bool flag);
    bool requires_grad() const { return impl_->requires_grad; }
    bool tracked() const { return impl_->node != nullptr; }
    // True when backward should flow a gradient into this tensor.
    bool needs_grad() const { return impl_->requires_grad || impl_->node != nullptr; }

    bool has_grad() const { return !impl_->grad.empty(); }
    // Grad buffer, allocated zero-filled on first use.
    std::vector<double>& grad();
    const std::vector<double>& grad() const { return impl_->grad; }
    void zero_grad();

    std::shared_ptr<TensorImpl> impl() const { return impl_; }

    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  private:
    std::shared_ptr<TensorImpl> impl_;
};

// Named trainable tensor inside a network.
struct Parameter {
    std::string name;
    Tensor tensor;
    bool trainable = true;
};

// Runs reverse-mode accumulation from a scalar loss. Gradients add onto
// whatever is already in each grad buffer; callers zero them between steps.
void backward(const Tensor& loss);

// While alive, ops do not record graph nodes (inference / oracle evaluation).
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool prev_;
};

bool grad_recording_enabled();

namespace detail {
std::shared_ptr<GradNode> make_node(std::vector<std::shared_ptr<GradNode>> inputs,
                                    std::function<void()> backward_fn);
// Accumulate src into t's grad buffer (allocating it if absent).
void accumulate_grad(TensorImpl& t, const std::vector<double>& src);
}  // namespace detail

}  // namespace curriseg
