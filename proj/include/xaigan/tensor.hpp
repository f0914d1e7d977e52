#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace xaigan {

using Scalar = double;
using Shape = std::vector<int>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;
struct TensorImpl;

// Pure gradient-array transform attached to a graph node. Fires exactly once
// per backward pass, after the node's gradient has been accumulated from all
// of its consumers and before it propagates to the node's inputs.
using GradTransform = std::function<std::vector<Scalar>(const std::vector<Scalar>&)>;

struct HookHandle {
    std::weak_ptr<TensorImpl> node;
    uint64_t id = 0;
};

struct TensorImpl {
    Shape shape;
    std::vector<Scalar> data;
    bool requires_grad = false;
    std::vector<Scalar> grad;
    bool has_grad = false;
    uint64_t node_id = 0;  // creation index; fixes backward processing order
    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::function<void(TensorImpl&)> backward_fn;  // accumulates into parents
    std::vector<std::pair<uint64_t, GradTransform>> hooks;
    uint64_t next_hook_id = 0;
    const char* op = "leaf";

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
};

// Dense n-dimensional array with optional reverse-mode graph linkage.
// Value type: copies share the underlying node.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, Scalar value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<Scalar> data, bool requires_grad = false);
    static Tensor scalar(Scalar value);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int64_t numel() const { return impl_->numel(); }
    int dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(impl_->shape.size()); }

    std::vector<Scalar>& data() { return impl_->data; }
    const std::vector<Scalar>& data() const { return impl_->data; }
    Scalar item() const;

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool v) { impl_->requires_grad = v; }

    bool has_grad() const { return impl_->has_grad; }
    const std::vector<Scalar>& grad() const;
    void zero_grad();

    // Same data, no graph linkage.
    Tensor detach() const;
    Tensor clone() const { return detach(); }

    bool is_leaf() const { return !impl_->backward_fn; }
    const char* op_name() const { return impl_->op; }

    std::shared_ptr<TensorImpl>& impl() { return impl_; }
    const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

private:
    std::shared_ptr<TensorImpl> impl_;
    friend Tensor make_leaf(Shape, std::vector<Scalar>, bool);
    friend Tensor make_op(const char*, Shape, std::vector<Scalar>, std::vector<Tensor>,
                          std::function<void(TensorImpl&)>);
};

// RAII guard: while alive, newly created ops do not link into the graph.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

// RAII guard: sets requires_grad=false on the given leaf tensors and restores
// the previous flags on destruction. Spans graph build and backward so frozen
// parameters never accumulate gradients.
class ParamFreeze {
public:
    explicit ParamFreeze(const std::vector<Tensor>& params);
    ~ParamFreeze();
    ParamFreeze(const ParamFreeze&) = delete;
    ParamFreeze& operator=(const ParamFreeze&) = delete;

private:
    std::vector<std::pair<std::shared_ptr<TensorImpl>, bool>> saved_;
};

// Reverse-mode pass from a scalar root. Gradients accumulate in fixed
// topological order (decreasing node creation index) so repeated runs over
// identically rebuilt graphs are bit-reproducible.
void backward(const Tensor& root);

HookHandle register_grad_hook(const Tensor& t, GradTransform transform);
void remove_grad_hook(const HookHandle& handle);
void clear_grad_hooks(const Tensor& t);

// ---- primitives -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise, strict shapes
Tensor scale(const Tensor& a, Scalar c);
Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n]

// x:[N,C,H,W], w:[OC,C,k,k], b:[OC] (optional, pass undefined Tensor to skip)
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding);
// x:[N,C,H,W], w:[C,OC,k,k], b:[OC]
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                        int padding, int output_padding);

Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, int start, int length);
Tensor pad2d(const Tensor& x, int pad_h, int pad_w);  // zero pad, last two dims

Tensor leaky_relu(const Tensor& x, Scalar slope);
Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor pow(const Tensor& x, Scalar exponent);

Tensor mean(const Tensor& x);  // scalar [1]
Tensor sum(const Tensor& x);   // scalar [1]
Tensor mse(const Tensor& x, const Tensor& target);  // scalar mean((x-t)^2)
Tensor l1(const Tensor& x, const Tensor& target);   // scalar mean(|x-t|)

// Per-(sample, channel) normalization over spatial dims, no affine part.
Tensor instance_norm(const Tensor& x, Scalar eps = 1e-5);

Tensor reshape(const Tensor& x, Shape new_shape);
// [N,1,H,W] -> [N,C,H,W] by repetition; backward sums over channels.
Tensor expand_channels(const Tensor& x, int channels);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, Scalar c) { return scale(a, c); }
inline Tensor operator*(Scalar c, const Tensor& a) { return scale(a, c); }

// ---- generic dispatcher ----------------------------------------------------

enum class OpKind {
    add, sub, mul, matmul, conv2d, conv_transpose2d, concat, slice, pad,
    leaky_relu, relu, tanh, sigmoid, abs, pow, mean, sum, mse, l1, instance_norm,
};

struct OpAttrs {
    int axis = 0;
    int stride = 1;
    int padding = 0;
    int output_padding = 0;
    int start = 0;
    int length = 0;
    int pad_h = 0;
    int pad_w = 0;
    Scalar slope = 0.2;
    Scalar exponent = 2.0;
    Scalar eps = 1e-5;
};

Tensor apply_primitive(OpKind kind, const std::vector<Tensor>& inputs, const OpAttrs& attrs = {});
const char* op_kind_name(OpKind kind);

// Central-difference gradient estimate of a scalar-valued f at x.
Tensor finite_difference_grad(const std::function<Scalar(const Tensor&)>& f, const Tensor& x,
                              Scalar eps);

}  // namespace xaigan
