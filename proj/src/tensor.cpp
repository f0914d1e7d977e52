#include "xaigan/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace xaigan {

namespace {

std::atomic<uint64_t> g_node_counter{0};
thread_local int g_no_grad_depth = 0;

void check(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

void accumulate(const std::shared_ptr<TensorImpl>& p, const std::vector<Scalar>& g) {
    if (!p->requires_grad) return;
    if (!p->has_grad) {
        p->grad.assign(p->data.size(), 0.0);
        p->has_grad = true;
    }
    for (size_t i = 0; i < g.size(); ++i) p->grad[i] += g[i];
}

}  // namespace

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
}

bool grad_enabled() { return g_no_grad_depth == 0; }
NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

ParamFreeze::ParamFreeze(const std::vector<Tensor>& params) {
    saved_.reserve(params.size());
    for (const Tensor& p : params) {
        saved_.emplace_back(p.impl(), p.impl()->requires_grad);
        p.impl()->requires_grad = false;
    }
}

ParamFreeze::~ParamFreeze() {
    for (auto& [impl, was] : saved_) impl->requires_grad = was;
}

Tensor make_leaf(Shape shape, std::vector<Scalar> data, bool requires_grad) {
    check(shape_numel(shape) == static_cast<int64_t>(data.size()),
          "tensor: shape " + shape_str(shape) + " does not match data length " +
              std::to_string(data.size()));
    for (int d : shape) check(d > 0, "tensor: non-positive dim in shape " + shape_str(shape));
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl>();
    t.impl_->shape = std::move(shape);
    t.impl_->data = std::move(data);
    t.impl_->requires_grad = requires_grad;
    t.impl_->node_id = g_node_counter.fetch_add(1);
    return t;
}

Tensor make_op(const char* op, Shape shape, std::vector<Scalar> data, std::vector<Tensor> parents,
               std::function<void(TensorImpl&)> bw) {
    bool link = grad_enabled();
    if (link) {
        link = false;
        for (const Tensor& p : parents)
            if (p.impl()->requires_grad || p.impl()->backward_fn) { link = true; break; }
    }
    Tensor t = make_leaf(std::move(shape), std::move(data), false);
    t.impl()->op = op;
    if (link) {
        t.impl()->requires_grad = true;
        for (Tensor& p : parents) t.impl()->parents.push_back(p.impl());
        t.impl()->backward_fn = std::move(bw);
    }
    return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::vector<Scalar> d(static_cast<size_t>(shape_numel(shape)), 0.0);
    return make_leaf(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::full(Shape shape, Scalar value, bool requires_grad) {
    std::vector<Scalar> d(static_cast<size_t>(shape_numel(shape)), value);
    return make_leaf(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<Scalar> data, bool requires_grad) {
    return make_leaf(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::scalar(Scalar value) { return make_leaf({1}, {value}, false); }

Scalar Tensor::item() const {
    check(numel() == 1, "item: tensor has " + std::to_string(numel()) + " elements");
    return impl_->data[0];
}

const std::vector<Scalar>& Tensor::grad() const {
    check(impl_->has_grad, "grad: no gradient accumulated");
    return impl_->grad;
}

void Tensor::zero_grad() {
    impl_->grad.clear();
    impl_->has_grad = false;
}

Tensor Tensor::detach() const {
    return make_leaf(impl_->shape, impl_->data, false);
}

// ---- backward engine -------------------------------------------------------

void backward(const Tensor& root) {
    check(root.numel() == 1, "backward: root must be scalar, got shape " + shape_str(root.shape()));
    auto root_impl = root.impl();
    if (!root_impl->requires_grad && !root_impl->backward_fn) return;

    // Collect reachable nodes.
    std::vector<TensorImpl*> nodes;
    std::unordered_set<TensorImpl*> seen;
    std::vector<TensorImpl*> stack{root_impl.get()};
    seen.insert(root_impl.get());
    while (!stack.empty()) {
        TensorImpl* n = stack.back();
        stack.pop_back();
        nodes.push_back(n);
        for (auto& p : n->parents)
            if (seen.insert(p.get()).second) stack.push_back(p.get());
    }

    // Decreasing creation index is a topological order (an op's output is
    // always created after its inputs) and breaks ties deterministically.
    std::sort(nodes.begin(), nodes.end(),
              [](TensorImpl* a, TensorImpl* b) { return a->node_id > b->node_id; });

    root_impl->grad.assign(1, 1.0);
    root_impl->has_grad = true;

    for (TensorImpl* n : nodes) {
        if (!n->has_grad) continue;  // no consumer contributed a gradient
        for (auto& [id, hook] : n->hooks) {
            (void)id;
            std::vector<Scalar> transformed = hook(n->grad);
            check(transformed.size() == n->grad.size(),
                  std::string("grad hook on ") + n->op + " changed gradient length from " +
                      std::to_string(n->grad.size()) + " to " + std::to_string(transformed.size()));
            n->grad = std::move(transformed);
        }
        if (n->backward_fn) n->backward_fn(*n);
    }
}

HookHandle register_grad_hook(const Tensor& t, GradTransform transform) {
    auto impl = t.impl();
    check(impl->requires_grad || impl->backward_fn != nullptr,
          "register_grad_hook: tensor does not participate in a graph");
    uint64_t id = impl->next_hook_id++;
    impl->hooks.emplace_back(id, std::move(transform));
    return HookHandle{impl, id};
}

void remove_grad_hook(const HookHandle& handle) {
    if (auto impl = handle.node.lock()) {
        auto& hooks = impl->hooks;
        hooks.erase(std::remove_if(hooks.begin(), hooks.end(),
                                   [&](const auto& h) { return h.first == handle.id; }),
                    hooks.end());
    }
}

void clear_grad_hooks(const Tensor& t) { t.impl()->hooks.clear(); }

// ---- elementwise and reductions ---------------------------------------------

static void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    check(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape("add", a, b);
    std::vector<Scalar> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    auto pa = a.impl(), pb = b.impl();
    return make_op("add", a.shape(), std::move(out), {a, b}, [pa, pb](TensorImpl& self) {
        accumulate(pa, self.grad);
        accumulate(pb, self.grad);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape("sub", a, b);
    std::vector<Scalar> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    auto pa = a.impl(), pb = b.impl();
    return make_op("sub", a.shape(), std::move(out), {a, b}, [pa, pb](TensorImpl& self) {
        accumulate(pa, self.grad);
        std::vector<Scalar> gb(self.grad.size());
        for (size_t i = 0; i < gb.size(); ++i) gb[i] = -self.grad[i];
        accumulate(pb, gb);
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape("mul", a, b);
    std::vector<Scalar> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    auto pa = a.impl(), pb = b.impl();
    return make_op("mul", a.shape(), std::move(out), {a, b}, [pa, pb](TensorImpl& self) {
        std::vector<Scalar> g(self.grad.size());
        for (size_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * pb->data[i];
        accumulate(pa, g);
        for (size_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * pa->data[i];
        accumulate(pb, g);
    });
}

Tensor scale(const Tensor& a, Scalar c) {
    std::vector<Scalar> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
    auto pa = a.impl();
    return make_op("scale", a.shape(), std::move(out), {a}, [pa, c](TensorImpl& self) {
        std::vector<Scalar> g(self.grad.size());
        for (size_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * c;
        accumulate(pa, g);
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    check(a.rank() == 2 && b.rank() == 2, "matmul: expects rank-2 inputs, got " +
                                              shape_str(a.shape()) + " and " + shape_str(b.shape()));
    check(a.dim(1) == b.dim(0), "matmul: inner dims differ, " + shape_str(a.shape()) + " x " +
                                    shape_str(b.shape()));
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<Scalar> out(static_cast<size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < k; ++j) {
            const Scalar av = a.data()[static_cast<size_t>(i) * k + j];
            for (int l = 0; l < n; ++l)
                out[static_cast<size_t>(i) * n + l] += av * b.data()[static_cast<size_t>(j) * n + l];
        }
    auto pa = a.impl(), pb = b.impl();
    return make_op("matmul", {m, n}, std::move(out), {a, b}, [pa, pb, m, k, n](TensorImpl& self) {
        std::vector<Scalar> ga(static_cast<size_t>(m) * k, 0.0);
        std::vector<Scalar> gb(static_cast<size_t>(k) * n, 0.0);
        for (int i = 0; i < m; ++i)
            for (int l = 0; l < n; ++l) {
                const Scalar g = self.grad[static_cast<size_t>(i) * n + l];
                for (int j = 0; j < k; ++j) {
                    ga[static_cast<size_t>(i) * k + j] += g * pb->data[static_cast<size_t>(j) * n + l];
                    gb[static_cast<size_t>(j) * n + l] += g * pa->data[static_cast<size_t>(i) * k + j];
                }
            }
        accumulate(pa, ga);
        accumulate(pb, gb);
    });
}

// ---- convolution -----------------------------------------------------------

namespace {

struct ConvDims {
    int n, c, h, w, oc, k, oh, ow;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int padding) {
    check(x.rank() == 4, "conv2d: input must be [N,C,H,W], got " + shape_str(x.shape()));
    check(w.rank() == 4, "conv2d: weight must be [OC,C,k,k], got " + shape_str(w.shape()));
    check(w.dim(2) == w.dim(3), "conv2d: kernel must be square, got " + shape_str(w.shape()));
    check(x.dim(1) == w.dim(1), "conv2d: input channels " + std::to_string(x.dim(1)) +
                                    " != weight in-channels " + std::to_string(w.dim(1)));
    ConvDims d{};
    d.n = x.dim(0); d.c = x.dim(1); d.h = x.dim(2); d.w = x.dim(3);
    d.oc = w.dim(0); d.k = w.dim(2);
    d.oh = (d.h + 2 * padding - d.k) / stride + 1;
    d.ow = (d.w + 2 * padding - d.k) / stride + 1;
    check(d.oh > 0 && d.ow > 0, "conv2d: kernel " + std::to_string(d.k) + " too large for input " +
                                    shape_str(x.shape()) + " with padding " + std::to_string(padding));
    return d;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding) {
    const ConvDims dd = conv_dims(x, w, stride, padding);
    if (b.defined())
        check(b.rank() == 1 && b.dim(0) == dd.oc,
              "conv2d: bias shape " + shape_str(b.shape()) + " != [" + std::to_string(dd.oc) + "]");

    const auto& xd = x.data();
    const auto& wd = w.data();
    std::vector<Scalar> out(static_cast<size_t>(dd.n) * dd.oc * dd.oh * dd.ow, 0.0);

    for (int n = 0; n < dd.n; ++n)
        for (int oc = 0; oc < dd.oc; ++oc) {
            Scalar* op = &out[(static_cast<size_t>(n) * dd.oc + oc) * dd.oh * dd.ow];
            if (b.defined()) {
                const Scalar bv = b.data()[static_cast<size_t>(oc)];
                for (int i = 0; i < dd.oh * dd.ow; ++i) op[i] = bv;
            }
            for (int ic = 0; ic < dd.c; ++ic) {
                const Scalar* ip = &xd[(static_cast<size_t>(n) * dd.c + ic) * dd.h * dd.w];
                const Scalar* wp = &wd[((static_cast<size_t>(oc) * dd.c + ic) * dd.k) * dd.k];
                for (int kh = 0; kh < dd.k; ++kh)
                    for (int kw = 0; kw < dd.k; ++kw) {
                        const Scalar wv = wp[kh * dd.k + kw];
                        if (wv == 0.0) continue;
                        for (int oh = 0; oh < dd.oh; ++oh) {
                            const int ih = oh * stride - padding + kh;
                            if (ih < 0 || ih >= dd.h) continue;
                            Scalar* orow = op + oh * dd.ow;
                            const Scalar* irow = ip + ih * dd.w;
                            for (int ow = 0; ow < dd.ow; ++ow) {
                                const int iw = ow * stride - padding + kw;
                                if (iw < 0 || iw >= dd.w) continue;
                                orow[ow] += wv * irow[iw];
                            }
                        }
                    }
            }
        }

    auto px = x.impl(), pw = w.impl();
    auto pb = b.defined() ? b.impl() : nullptr;
    std::vector<Tensor> parents{x, w};
    if (b.defined()) parents.push_back(b);

    auto bw = [px, pw, pb, dd, stride, padding](TensorImpl& self) {
        const auto& g = self.grad;
        std::vector<Scalar> gx(px->data.size(), 0.0);
        std::vector<Scalar> gw(pw->data.size(), 0.0);
        for (int n = 0; n < dd.n; ++n)
            for (int oc = 0; oc < dd.oc; ++oc) {
                const Scalar* gp = &g[(static_cast<size_t>(n) * dd.oc + oc) * dd.oh * dd.ow];
                for (int ic = 0; ic < dd.c; ++ic) {
                    const Scalar* ip = &px->data[(static_cast<size_t>(n) * dd.c + ic) * dd.h * dd.w];
                    Scalar* gip = &gx[(static_cast<size_t>(n) * dd.c + ic) * dd.h * dd.w];
                    const Scalar* wp = &pw->data[((static_cast<size_t>(oc) * dd.c + ic) * dd.k) * dd.k];
                    Scalar* gwp = &gw[((static_cast<size_t>(oc) * dd.c + ic) * dd.k) * dd.k];
                    for (int kh = 0; kh < dd.k; ++kh)
                        for (int kw = 0; kw < dd.k; ++kw) {
                            const Scalar wv = wp[kh * dd.k + kw];
                            Scalar wg = 0.0;
                            for (int oh = 0; oh < dd.oh; ++oh) {
                                const int ih = oh * stride - padding + kh;
                                if (ih < 0 || ih >= dd.h) continue;
                                const Scalar* grow = gp + oh * dd.ow;
                                const Scalar* irow = ip + ih * dd.w;
                                Scalar* girow = gip + ih * dd.w;
                                for (int ow = 0; ow < dd.ow; ++ow) {
                                    const int iw = ow * stride - padding + kw;
                                    if (iw < 0 || iw >= dd.w) continue;
                                    girow[iw] += wv * grow[ow];
                                    wg += irow[iw] * grow[ow];
                                }
                            }
                            gwp[kh * dd.k + kw] += wg;
                        }
                }
            }
        accumulate(px, gx);
        accumulate(pw, gw);
        if (pb) {
            std::vector<Scalar> gb(pb->data.size(), 0.0);
            for (int n = 0; n < dd.n; ++n)
                for (int oc = 0; oc < dd.oc; ++oc) {
                    const Scalar* gp = &g[(static_cast<size_t>(n) * dd.oc + oc) * dd.oh * dd.ow];
                    Scalar s = 0.0;
                    for (int i = 0; i < dd.oh * dd.ow; ++i) s += gp[i];
                    gb[static_cast<size_t>(oc)] += s;
                }
            accumulate(pb, gb);
        }
    };
    return make_op("conv2d", {dd.n, dd.oc, dd.oh, dd.ow}, std::move(out), std::move(parents), bw);
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding,
                        int output_padding) {
    check(x.rank() == 4, "conv_transpose2d: input must be [N,C,H,W], got " + shape_str(x.shape()));
    check(w.rank() == 4 && w.dim(2) == w.dim(3),
          "conv_transpose2d: weight must be [C,OC,k,k], got " + shape_str(w.shape()));
    check(x.dim(1) == w.dim(0), "conv_transpose2d: input channels " + std::to_string(x.dim(1)) +
                                    " != weight in-channels " + std::to_string(w.dim(0)));
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), wdim = x.dim(3);
    const int oc = w.dim(1), k = w.dim(2);
    const int oh = (h - 1) * stride - 2 * padding + k + output_padding;
    const int ow = (wdim - 1) * stride - 2 * padding + k + output_padding;
    check(oh > 0 && ow > 0, "conv_transpose2d: degenerate output for input " + shape_str(x.shape()));
    if (b.defined())
        check(b.rank() == 1 && b.dim(0) == oc, "conv_transpose2d: bias shape " +
                                                   shape_str(b.shape()) + " != [" +
                                                   std::to_string(oc) + "]");

    std::vector<Scalar> out(static_cast<size_t>(n) * oc * oh * ow, 0.0);
    const auto& xd = x.data();
    const auto& wd = w.data();
    for (int ni = 0; ni < n; ++ni) {
        if (b.defined()) {
            for (int o = 0; o < oc; ++o) {
                Scalar* op = &out[(static_cast<size_t>(ni) * oc + o) * oh * ow];
                const Scalar bv = b.data()[static_cast<size_t>(o)];
                for (int i = 0; i < oh * ow; ++i) op[i] = bv;
            }
        }
        for (int ic = 0; ic < c; ++ic) {
            const Scalar* ip = &xd[(static_cast<size_t>(ni) * c + ic) * h * wdim];
            for (int o = 0; o < oc; ++o) {
                Scalar* op = &out[(static_cast<size_t>(ni) * oc + o) * oh * ow];
                const Scalar* wp = &wd[((static_cast<size_t>(ic) * oc + o) * k) * k];
                for (int ih = 0; ih < h; ++ih)
                    for (int iw = 0; iw < wdim; ++iw) {
                        const Scalar xv = ip[ih * wdim + iw];
                        if (xv == 0.0) continue;
                        for (int kh = 0; kh < k; ++kh) {
                            const int toh = ih * stride - padding + kh;
                            if (toh < 0 || toh >= oh) continue;
                            for (int kw = 0; kw < k; ++kw) {
                                const int tow = iw * stride - padding + kw;
                                if (tow < 0 || tow >= ow) continue;
                                op[toh * ow + tow] += xv * wp[kh * k + kw];
                            }
                        }
                    }
            }
        }
    }

    auto px = x.impl(), pw = w.impl();
    auto pb = b.defined() ? b.impl() : nullptr;
    std::vector<Tensor> parents{x, w};
    if (b.defined()) parents.push_back(b);

    auto bw = [px, pw, pb, n, c, h, wdim, oc, k, oh, ow, stride, padding](TensorImpl& self) {
        const auto& g = self.grad;
        std::vector<Scalar> gx(px->data.size(), 0.0);
        std::vector<Scalar> gw(pw->data.size(), 0.0);
        for (int ni = 0; ni < n; ++ni)
            for (int ic = 0; ic < c; ++ic) {
                const Scalar* ip = &px->data[(static_cast<size_t>(ni) * c + ic) * h * wdim];
                Scalar* gip = &gx[(static_cast<size_t>(ni) * c + ic) * h * wdim];
                for (int o = 0; o < oc; ++o) {
                    const Scalar* gp = &g[(static_cast<size_t>(ni) * oc + o) * oh * ow];
                    const Scalar* wp = &pw->data[((static_cast<size_t>(ic) * oc + o) * k) * k];
                    Scalar* gwp = &gw[((static_cast<size_t>(ic) * oc + o) * k) * k];
                    for (int ih = 0; ih < h; ++ih)
                        for (int iw = 0; iw < wdim; ++iw) {
                            const Scalar xv = ip[ih * wdim + iw];
                            Scalar xg = 0.0;
                            for (int kh = 0; kh < k; ++kh) {
                                const int toh = ih * stride - padding + kh;
                                if (toh < 0 || toh >= oh) continue;
                                for (int kw = 0; kw < k; ++kw) {
                                    const int tow = iw * stride - padding + kw;
                                    if (tow < 0 || tow >= ow) continue;
                                    const Scalar gv = gp[toh * ow + tow];
                                    xg += gv * wp[kh * k + kw];
                                    gwp[kh * k + kw] += gv * xv;
                                }
                            }
                            gip[ih * wdim + iw] += xg;
                        }
                }
            }
        accumulate(px, gx);
        accumulate(pw, gw);
        if (pb) {
            std::vector<Scalar> gb(pb->data.size(), 0.0);
            for (int ni = 0; ni < n; ++ni)
                for (int o = 0; o < oc; ++o) {
                    const Scalar* gp = &g[(static_cast<size_t>(ni) * oc + o) * oh * ow];
                    Scalar s = 0.0;
                    for (int i = 0; i < oh * ow; ++i) s += gp[i];
                    gb[static_cast<size_t>(o)] += s;
                }
            accumulate(pb, gb);
        }
    };
    return make_op("conv_transpose2d", {n, oc, oh, ow}, std::move(out), std::move(parents), bw);
}

// ---- layout ops ------------------------------------------------------------

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    check(!parts.empty(), "concat: no inputs");
    const Shape& s0 = parts[0].shape();
    check(axis >= 0 && axis < static_cast<int>(s0.size()),
          "concat: axis " + std::to_string(axis) + " out of range for " + shape_str(s0));
    Shape out_shape = s0;
    int total_axis = 0;
    for (const Tensor& p : parts) {
        check(p.rank() == parts[0].rank(), "concat: rank mismatch " + shape_str(p.shape()) +
                                               " vs " + shape_str(s0));
        for (int i = 0; i < p.rank(); ++i)
            if (i != axis)
                check(p.dim(i) == s0[static_cast<size_t>(i)],
                      "concat: dim " + std::to_string(i) + " mismatch " + shape_str(p.shape()) +
                          " vs " + shape_str(s0));
        total_axis += p.dim(axis);
    }
    out_shape[static_cast<size_t>(axis)] = total_axis;

    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s0[static_cast<size_t>(i)];
    for (size_t i = static_cast<size_t>(axis) + 1; i < s0.size(); ++i) inner *= s0[i];

    std::vector<Scalar> out(static_cast<size_t>(shape_numel(out_shape)));
    int64_t offset = 0;
    for (const Tensor& p : parts) {
        const int64_t block = p.dim(axis) * inner;
        for (int64_t o = 0; o < outer; ++o)
            std::copy_n(p.data().begin() + o * block, block,
                        out.begin() + o * (total_axis * inner) + offset);
        offset += block;
    }

    std::vector<std::shared_ptr<TensorImpl>> impls;
    std::vector<int> blocks;
    for (const Tensor& p : parts) {
        impls.push_back(p.impl());
        blocks.push_back(p.dim(axis));
    }
    auto bw = [impls, blocks, outer, inner, total_axis](TensorImpl& self) {
        int64_t offset = 0;
        for (size_t pi = 0; pi < impls.size(); ++pi) {
            const int64_t block = blocks[pi] * inner;
            std::vector<Scalar> g(static_cast<size_t>(outer * block));
            for (int64_t o = 0; o < outer; ++o)
                std::copy_n(self.grad.begin() + o * (total_axis * inner) + offset, block,
                            g.begin() + o * block);
            accumulate(impls[pi], g);
            offset += block;
        }
    };
    return make_op("concat", std::move(out_shape), std::move(out), parts, bw);
}

Tensor slice(const Tensor& x, int axis, int start, int length) {
    check(axis >= 0 && axis < x.rank(),
          "slice: axis " + std::to_string(axis) + " out of range for " + shape_str(x.shape()));
    check(start >= 0 && length > 0 && start + length <= x.dim(axis),
          "slice: range [" + std::to_string(start) + "," + std::to_string(start + length) +
              ") out of bounds for dim " + std::to_string(x.dim(axis)));
    Shape out_shape = x.shape();
    out_shape[static_cast<size_t>(axis)] = length;

    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= x.dim(i);
    for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
    const int64_t in_block = x.dim(axis) * inner;
    const int64_t out_block = length * inner;

    std::vector<Scalar> out(static_cast<size_t>(outer * out_block));
    for (int64_t o = 0; o < outer; ++o)
        std::copy_n(x.data().begin() + o * in_block + start * inner, out_block,
                    out.begin() + o * out_block);

    auto px = x.impl();
    auto bw = [px, outer, inner, in_block, out_block, start](TensorImpl& self) {
        std::vector<Scalar> g(px->data.size(), 0.0);
        for (int64_t o = 0; o < outer; ++o)
            std::copy_n(self.grad.begin() + o * out_block, out_block,
                        g.begin() + o * in_block + start * inner);
        accumulate(px, g);
    };
    return make_op("slice", std::move(out_shape), std::move(out), {x}, bw);
}

Tensor pad2d(const Tensor& x, int pad_h, int pad_w) {
    check(x.rank() >= 2, "pad: input rank must be >= 2, got " + shape_str(x.shape()));
    check(pad_h >= 0 && pad_w >= 0, "pad: negative padding");
    const int h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1);
    const int oh = h + 2 * pad_h, ow = w + 2 * pad_w;
    int64_t outer = 1;
    for (int i = 0; i < x.rank() - 2; ++i) outer *= x.dim(i);
    Shape out_shape = x.shape();
    out_shape[out_shape.size() - 2] = oh;
    out_shape[out_shape.size() - 1] = ow;

    std::vector<Scalar> out(static_cast<size_t>(outer) * oh * ow, 0.0);
    for (int64_t o = 0; o < outer; ++o)
        for (int i = 0; i < h; ++i)
            std::copy_n(x.data().begin() + (o * h + i) * w, w,
                        out.begin() + (o * oh + i + pad_h) * ow + pad_w);

    auto px = x.impl();
    auto bw = [px, outer, h, w, oh, ow, pad_h, pad_w](TensorImpl& self) {
        std::vector<Scalar> g(px->data.size());
        for (int64_t o = 0; o < outer; ++o)
            for (int i = 0; i < h; ++i)
                std::copy_n(self.grad.begin() + (o * oh + i + pad_h) * ow + pad_w, w,
                            g.begin() + (o * h + i) * w);
        accumulate(px, g);
    };
    return make_op("pad", std::move(out_shape), std::move(out), {x}, bw);
}

Tensor reshape(const Tensor& x, Shape new_shape) {
    check(shape_numel(new_shape) == x.numel(), "reshape: cannot view " + shape_str(x.shape()) +
                                                   " as " + shape_str(new_shape));
    auto px = x.impl();
    return make_op("reshape", std::move(new_shape), x.data(), {x},
                   [px](TensorImpl& self) { accumulate(px, self.grad); });
}

Tensor expand_channels(const Tensor& x, int channels) {
    check(x.rank() == 4 && x.dim(1) == 1,
          "expand_channels: input must be [N,1,H,W], got " + shape_str(x.shape()));
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int64_t plane = static_cast<int64_t>(h) * w;
    std::vector<Scalar> out(static_cast<size_t>(n) * channels * plane);
    for (int ni = 0; ni < n; ++ni)
        for (int c = 0; c < channels; ++c)
            std::copy_n(x.data().begin() + ni * plane, plane,
                        out.begin() + (static_cast<int64_t>(ni) * channels + c) * plane);
    auto px = x.impl();
    auto bw = [px, n, channels, plane](TensorImpl& self) {
        std::vector<Scalar> g(px->data.size(), 0.0);
        for (int ni = 0; ni < n; ++ni)
            for (int c = 0; c < channels; ++c) {
                const Scalar* src = &self.grad[(static_cast<int64_t>(ni) * channels + c) * plane];
                Scalar* dst = &g[ni * plane];
                for (int64_t i = 0; i < plane; ++i) dst[i] += src[i];
            }
        accumulate(px, g);
    };
    return make_op("expand_channels", {n, channels, h, w}, std::move(out), {x}, bw);
}

// ---- pointwise nonlinearities ------------------------------------------------

namespace {

template <typename Fwd, typename Bwd>
Tensor pointwise(const char* name, const Tensor& x, Fwd fwd, Bwd bwd) {
    std::vector<Scalar> out(x.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(x.data()[i]);
    auto px = x.impl();
    return make_op(name, x.shape(), std::move(out), {x}, [px, bwd](TensorImpl& self) {
        std::vector<Scalar> g(self.grad.size());
        for (size_t i = 0; i < g.size(); ++i)
            g[i] = self.grad[i] * bwd(px->data[i], self.data[i]);
        accumulate(px, g);
    });
}

}  // namespace

Tensor leaky_relu(const Tensor& x, Scalar slope) {
    return pointwise(
        "leaky_relu", x, [slope](Scalar v) { return v > 0 ? v : slope * v; },
        [slope](Scalar v, Scalar) { return v > 0 ? 1.0 : slope; });
}

Tensor relu(const Tensor& x) {
    return pointwise(
        "relu", x, [](Scalar v) { return v > 0 ? v : 0.0; },
        [](Scalar v, Scalar) { return v > 0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& x) {
    return pointwise(
        "tanh", x, [](Scalar v) { return std::tanh(v); },
        [](Scalar, Scalar y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
    return pointwise(
        "sigmoid", x, [](Scalar v) { return 1.0 / (1.0 + std::exp(-v)); },
        [](Scalar, Scalar y) { return y * (1.0 - y); });
}

Tensor abs(const Tensor& x) {
    return pointwise(
        "abs", x, [](Scalar v) { return std::abs(v); },
        [](Scalar v, Scalar) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Tensor pow(const Tensor& x, Scalar exponent) {
    return pointwise(
        "pow", x, [exponent](Scalar v) { return std::pow(v, exponent); },
        [exponent](Scalar v, Scalar) { return exponent * std::pow(v, exponent - 1.0); });
}

// ---- reductions and losses ---------------------------------------------------

Tensor sum(const Tensor& x) {
    Scalar s = 0.0;
    for (Scalar v : x.data()) s += v;
    auto px = x.impl();
    return make_op("sum", {1}, {s}, {x}, [px](TensorImpl& self) {
        accumulate(px, std::vector<Scalar>(px->data.size(), self.grad[0]));
    });
}

Tensor mean(const Tensor& x) {
    const Scalar inv_n = 1.0 / static_cast<Scalar>(x.numel());
    Scalar s = 0.0;
    for (Scalar v : x.data()) s += v;
    auto px = x.impl();
    return make_op("mean", {1}, {s * inv_n}, {x}, [px, inv_n](TensorImpl& self) {
        accumulate(px, std::vector<Scalar>(px->data.size(), self.grad[0] * inv_n));
    });
}

Tensor mse(const Tensor& x, const Tensor& target) {
    check_same_shape("mse", x, target);
    const Scalar inv_n = 1.0 / static_cast<Scalar>(x.numel());
    Scalar s = 0.0;
    for (size_t i = 0; i < x.data().size(); ++i) {
        const Scalar d = x.data()[i] - target.data()[i];
        s += d * d;
    }
    auto px = x.impl(), pt = target.impl();
    return make_op("mse", {1}, {s * inv_n}, {x, target}, [px, pt, inv_n](TensorImpl& self) {
        std::vector<Scalar> g(px->data.size());
        for (size_t i = 0; i < g.size(); ++i)
            g[i] = self.grad[0] * 2.0 * (px->data[i] - pt->data[i]) * inv_n;
        accumulate(px, g);
        for (Scalar& v : g) v = -v;
        accumulate(pt, g);
    });
}

Tensor l1(const Tensor& x, const Tensor& target) {
    check_same_shape("l1", x, target);
    const Scalar inv_n = 1.0 / static_cast<Scalar>(x.numel());
    Scalar s = 0.0;
    for (size_t i = 0; i < x.data().size(); ++i) s += std::abs(x.data()[i] - target.data()[i]);
    auto px = x.impl(), pt = target.impl();
    return make_op("l1", {1}, {s * inv_n}, {x, target}, [px, pt, inv_n](TensorImpl& self) {
        std::vector<Scalar> g(px->data.size());
        for (size_t i = 0; i < g.size(); ++i) {
            const Scalar d = px->data[i] - pt->data[i];
            g[i] = self.grad[0] * (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)) * inv_n;
        }
        accumulate(px, g);
        for (Scalar& v : g) v = -v;
        accumulate(pt, g);
    });
}

Tensor instance_norm(const Tensor& x, Scalar eps) {
    check(x.rank() == 4, "instance_norm: input must be [N,C,H,W], got " + shape_str(x.shape()));
    const int n = x.dim(0), c = x.dim(1);
    const int64_t plane = static_cast<int64_t>(x.dim(2)) * x.dim(3);
    check(plane > 0, "instance_norm: empty spatial dims");
    const Scalar inv_m = 1.0 / static_cast<Scalar>(plane);

    std::vector<Scalar> out(x.data().size());
    std::vector<Scalar> inv_std(static_cast<size_t>(n) * c);
    for (int i = 0; i < n * c; ++i) {
        const Scalar* ip = &x.data()[i * plane];
        Scalar mu = 0.0;
        for (int64_t j = 0; j < plane; ++j) mu += ip[j];
        mu *= inv_m;
        Scalar var = 0.0;
        for (int64_t j = 0; j < plane; ++j) {
            const Scalar d = ip[j] - mu;
            var += d * d;
        }
        var *= inv_m;
        const Scalar is = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<size_t>(i)] = is;
        Scalar* op = &out[i * plane];
        for (int64_t j = 0; j < plane; ++j) op[j] = (ip[j] - mu) * is;
    }

    auto px = x.impl();
    auto bw = [px, n, c, plane, inv_m, inv_std](TensorImpl& self) {
        std::vector<Scalar> g(px->data.size());
        for (int i = 0; i < n * c; ++i) {
            const Scalar* gp = &self.grad[i * plane];
            const Scalar* yp = &self.data[i * plane];  // normalized output
            const Scalar is = inv_std[static_cast<size_t>(i)];
            Scalar g_mean = 0.0, gy_mean = 0.0;
            for (int64_t j = 0; j < plane; ++j) {
                g_mean += gp[j];
                gy_mean += gp[j] * yp[j];
            }
            g_mean *= inv_m;
            gy_mean *= inv_m;
            Scalar* op = &g[i * plane];
            for (int64_t j = 0; j < plane; ++j)
                op[j] = is * (gp[j] - g_mean - yp[j] * gy_mean);
        }
        accumulate(px, g);
    };
    return make_op("instance_norm", x.shape(), std::move(out), {x}, bw);
}

// ---- dispatcher --------------------------------------------------------------

const char* op_kind_name(OpKind kind) {
    switch (kind) {
        case OpKind::add: return "add";
        case OpKind::sub: return "sub";
        case OpKind::mul: return "mul";
        case OpKind::matmul: return "matmul";
        case OpKind::conv2d: return "conv2d";
        case OpKind::conv_transpose2d: return "conv_transpose2d";
        case OpKind::concat: return "concat";
        case OpKind::slice: return "slice";
        case OpKind::pad: return "pad";
        case OpKind::leaky_relu: return "leaky_relu";
        case OpKind::relu: return "relu";
        case OpKind::tanh: return "tanh";
        case OpKind::sigmoid: return "sigmoid";
        case OpKind::abs: return "abs";
        case OpKind::pow: return "pow";
        case OpKind::mean: return "mean";
        case OpKind::sum: return "sum";
        case OpKind::mse: return "mse";
        case OpKind::l1: return "l1";
        case OpKind::instance_norm: return "instance_norm";
    }
    return "?";
}

Tensor apply_primitive(OpKind kind, const std::vector<Tensor>& in, const OpAttrs& a) {
    auto want = [&](size_t n) {
        check(in.size() == n, std::string(op_kind_name(kind)) + ": expected " + std::to_string(n) +
                                  " inputs, got " + std::to_string(in.size()));
    };
    switch (kind) {
        case OpKind::add: want(2); return add(in[0], in[1]);
        case OpKind::sub: want(2); return sub(in[0], in[1]);
        case OpKind::mul: want(2); return mul(in[0], in[1]);
        case OpKind::matmul: want(2); return matmul(in[0], in[1]);
        case OpKind::conv2d:
            check(in.size() == 2 || in.size() == 3, "conv2d: expected 2 or 3 inputs");
            return conv2d(in[0], in[1], in.size() == 3 ? in[2] : Tensor(), a.stride, a.padding);
        case OpKind::conv_transpose2d:
            check(in.size() == 2 || in.size() == 3, "conv_transpose2d: expected 2 or 3 inputs");
            return conv_transpose2d(in[0], in[1], in.size() == 3 ? in[2] : Tensor(), a.stride,
                                    a.padding, a.output_padding);
        case OpKind::concat: return concat(in, a.axis);
        case OpKind::slice: want(1); return slice(in[0], a.axis, a.start, a.length);
        case OpKind::pad: want(1); return pad2d(in[0], a.pad_h, a.pad_w);
        case OpKind::leaky_relu: want(1); return leaky_relu(in[0], a.slope);
        case OpKind::relu: want(1); return relu(in[0]);
        case OpKind::tanh: want(1); return tanh(in[0]);
        case OpKind::sigmoid: want(1); return sigmoid(in[0]);
        case OpKind::abs: want(1); return abs(in[0]);
        case OpKind::pow: want(1); return pow(in[0], a.exponent);
        case OpKind::mean: want(1); return mean(in[0]);
        case OpKind::sum: want(1); return sum(in[0]);
        case OpKind::mse: want(2); return mse(in[0], in[1]);
        case OpKind::l1: want(2); return l1(in[0], in[1]);
        case OpKind::instance_norm: want(1); return instance_norm(in[0], a.eps);
    }
    throw std::invalid_argument("apply_primitive: unknown op kind");
}

Tensor finite_difference_grad(const std::function<Scalar(const Tensor&)>& f, const Tensor& x,
                              Scalar eps) {
    check(eps > 0, "finite_difference_grad: eps must be positive");
    Tensor probe = x.detach();
    std::vector<Scalar> g(probe.data().size());
    for (size_t i = 0; i < g.size(); ++i) {
        const Scalar orig = probe.data()[i];
        probe.data()[i] = orig + eps;
        const Scalar fp = f(probe);
        probe.data()[i] = orig - eps;
        const Scalar fm = f(probe);
        probe.data()[i] = orig;
        g[i] = (fp - fm) / (2.0 * eps);
    }
    return Tensor::from_data(x.shape(), std::move(g));
}

}  // namespace xaigan
