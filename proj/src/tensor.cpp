#include "curriseg/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace curriseg {

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor shape extents must be positive, got " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
}

static std::shared_ptr<TensorImpl> make_impl(Shape shape) {
    auto impl = std::make_shared<TensorImpl>();
    int64_t n = shape_numel(shape);
    impl->shape = std::move(shape);
    impl->values.assign(static_cast<size_t>(n), 0.0);
    return impl;
}

Tensor Tensor::zeros(Shape shape) {
    return Tensor(make_impl(std::move(shape)));
}

Tensor Tensor::full(Shape shape, double value) {
    auto impl = make_impl(std::move(shape));
    std::fill(impl->values.begin(), impl->values.end(), value);
    return Tensor(impl);
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
    int64_t n = shape_numel(shape);
    if (n != static_cast<int64_t>(values.size()))
        throw std::invalid_argument("value count " + std::to_string(values.size()) +
                                    " does not match shape " + shape_str(shape));
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->values = std::move(values);
    return Tensor(impl);
}

Tensor Tensor::scalar(double value) {
    return from({1}, {value});
}

Tensor Tensor::randn(Shape shape, std::mt19937_64& rng, double stddev) {
    auto impl = make_impl(std::move(shape));
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& v : impl->values) v = dist(rng);
    return Tensor(impl);
}

Tensor Tensor::rand_uniform(Shape shape, std::mt19937_64& rng, double lo, double hi) {
    auto impl = make_impl(std::move(shape));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (auto& v : impl->values) v = dist(rng);
    return Tensor(impl);
}

double Tensor::item() const {
    if (numel() != 1) throw std::invalid_argument("item() on non-scalar tensor of shape " + shape_str(shape()));
    return impl_->values[0];
}

Tensor& Tensor::set_requires_grad(bool flag) {
    impl_->requires_grad = flag;
    return *this;
}

std::vector<double>& Tensor::grad() {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), 0.0);
    return impl_->grad;
}

void Tensor::zero_grad() {
    std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

namespace {
std::atomic<uint64_t> g_next_node_id{1};
thread_local bool g_grad_recording = true;
}  // namespace

bool grad_recording_enabled() {
    return g_grad_recording;
}

NoGradGuard::NoGradGuard() : prev_(g_grad_recording) {
    g_grad_recording = false;
}

NoGradGuard::~NoGradGuard() {
    g_grad_recording = prev_;
}

namespace detail {

std::shared_ptr<GradNode> make_node(std::vector<std::shared_ptr<GradNode>> inputs,
                                    std::function<void()> backward_fn) {
    auto node = std::make_shared<GradNode>();
    node->id = g_next_node_id.fetch_add(1);
    node->inputs = std::move(inputs);
    node->backward = std::move(backward_fn);
    return node;
}

void accumulate_grad(TensorImpl& t, const std::vector<double>& src) {
    if (t.grad.empty()) t.grad.assign(t.values.size(), 0.0);
    for (size_t i = 0; i < src.size(); ++i) t.grad[i] += src[i];
}

}  // namespace detail

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw std::invalid_argument("backward requires a scalar loss");
    auto root = loss.impl()->node;
    if (!root) throw std::invalid_argument("backward on a tensor that is not part of a tracked graph");

    // Seed d(loss)/d(loss) = 1, adding onto any existing accumulation.
    if (loss.impl()->grad.empty()) loss.impl()->grad.assign(1, 0.0);
    loss.impl()->grad[0] += 1.0;

    // Collect every reachable node, then replay them newest-first. Node ids
    // increase in creation order, which respects dataflow.
    std::vector<std::shared_ptr<GradNode>> nodes;
    std::unordered_set<const GradNode*> seen;
    std::vector<std::shared_ptr<GradNode>> stack{root};
    seen.insert(root.get());
    while (!stack.empty()) {
        auto n = stack.back();
        stack.pop_back();
        nodes.push_back(n);
        for (const auto& in : n->inputs) {
            if (in && seen.insert(in.get()).second) stack.push_back(in);
        }
    }
    std::sort(nodes.begin(), nodes.end(),
              [](const auto& a, const auto& b) { return a->id > b->id; });
    for (const auto& n : nodes) {
        if (n->backward) n->backward();
    }
}

}  // namespace curriseg
