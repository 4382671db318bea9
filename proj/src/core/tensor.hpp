#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "error.hpp"
#include "rng.hpp"

namespace salfuse {

// Dense 4-D extents (batch, channels, height, width). Scalars are 1x1x1x1.
struct Shape {
    int n = 1;
    int c = 1;
    int h = 1;
    int w = 1;

    std::int64_t numel() const {
        return static_cast<std::int64_t>(n) * c * h * w;
    }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

class Tensor;

// One node of the computation graph: a dense value, a same-shape gradient
// accumulator and, when grad is required, links back to the producing op.
struct TensorNode {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<Tensor> parents;
    std::function<void(const TensorNode&)> backprop;
};

// Shared handle to a TensorNode; cheap to copy, value semantics for the graph.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(const Shape& shape, bool requires_grad = false);
    static Tensor full(const Shape& shape, double value, bool requires_grad = false);
    static Tensor from_values(const Shape& shape, std::vector<double> values,
                              bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool valid() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::int64_t numel() const { return node_->shape.numel(); }

    // Shared-handle semantics: a const Tensor still designates mutable data,
    // exactly like a shared_ptr.
    std::vector<double>& values() const { return node_->values; }
    std::vector<double>& grad() const { return node_->grad; }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool flag) const { node_->requires_grad = flag; }
    void zero_grad() const { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

    // Scalar read; usage error when the tensor is not a single element.
    double item() const;

    TensorNode* node() const { return node_.get(); }
    bool same_node(const Tensor& other) const { return node_ == other.node_; }

private:
    explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}
    std::shared_ptr<TensorNode> node_;

    friend Tensor make_op_node(const Shape& shape, std::vector<Tensor> parents,
                               std::function<void(const TensorNode&)> backprop);
};

// Graph recording is on by default; a NoGradGuard turns it off for the
// current thread (frozen-teacher forward passes, inference, export).
bool grad_enabled();

struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

// ---------------------------------------------------------------------------
// Operations. Every op is differentiable w.r.t. all tensor inputs that
// require grad; shape violations throw config errors naming both shapes.
// ---------------------------------------------------------------------------

// Cross-correlation, kernel O x C x Kh x Kw, bias 1 x O x 1 x 1.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride, int padding);

// 2x2 window, stride 2; gradient routes to the first (row-major) max.
Tensor maxpool2d(const Tensor& input);

Tensor relu(const Tensor& input);
Tensor sigmoid(const Tensor& input);

// Fixed (non-learnable) bilinear interpolation by an integer factor.
Tensor upsample_bilinear(const Tensor& input, int factor);

Tensor concat_channels(const std::vector<Tensor>& inputs);

Tensor add(const Tensor& a, const Tensor& b);

// out = weight * map, weight a 1-element tensor (learnable combination weight).
Tensor scale(const Tensor& map, const Tensor& weight);

// Elementwise clamp to [lo, hi]; gradient passes through inside the range.
Tensor clamp(const Tensor& input, double lo, double hi);

Tensor sum(const Tensor& input);

// Sum of squared differences over all elements (no averaging).
Tensor l2_loss(const Tensor& x, const Tensor& y);

// Mean over all elements of -[y log p + (1-y) log(1-p)]; target must be binary.
Tensor cross_entropy(const Tensor& pred, const Tensor& target);

// Reverse-mode sweep from a scalar loss. Parameters must have cleared
// accumulators; every visited node receives its gradient exactly once.
void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Parameters and the optimizer step.
// ---------------------------------------------------------------------------

struct Parameter {
    std::string name;
    Tensor tensor;                 // requires_grad = true
    std::vector<double> momentum;  // same extent as the tensor
};

// Ordered, uniquely named parameter registry for one network.
class ParameterStore {
public:
    Parameter* create(const std::string& name, const Shape& shape);
    Parameter* find(const std::string& name);
    const Parameter* find(const std::string& name) const;
    std::vector<Parameter*> all();
    std::vector<const Parameter*> all() const;
    std::size_t size() const { return order_.size(); }
    void zero_grad();

private:
    std::vector<std::unique_ptr<Parameter>> order_;
};

// Fan-in scaled uniform init for conv kernels, U(-1/sqrt(fan_in), +): the
// fan-in is C*Kh*Kw of the kernel shape. Biases stay zero.
void init_conv_kernel(Parameter* kernel, Rng& rng);

// buffer <- momentum*buffer + grad; value <- value - lr*buffer; grads cleared.
void sgd_step(const std::vector<Parameter*>& params, double lr, double momentum);

}  // namespace salfuse
