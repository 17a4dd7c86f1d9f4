#include "spincim/autodiff.hpp"

#include "spincim/errors.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace spincim::ad {

Tensor& Node::ensure_grad() {
    if (!grad_alloc) {
        grad = Tensor::zeros(value.shape());
        grad_alloc = true;
    }
    return grad;
}

void Node::accumulate(const Tensor& g) {
    Tensor& dst = ensure_grad();
    for (std::size_t i = 0; i < g.numel(); ++i)
        dst[i] += g[i];
}

Var constant(Tensor v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    return n;
}

Var leaf(Tensor v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = true;
    return n;
}

void zero_grad(const Var& v) {
    v->grad_alloc = false;
    v->grad = Tensor();
}

namespace {

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> back) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        n->requires_grad = n->requires_grad || p->requires_grad;
    if (n->requires_grad)
        n->backward = std::move(back);
    return n;
}

void topo_sort(const Var& root, std::vector<Node*>& order) {
    // iterative DFS; graphs here are small but may share subtrees
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.push_back({root.get(), 0});
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx].get();
            ++idx;
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
}

} // namespace

void backward(const Var& root) {
    if (root->value.numel() != 1)
        throw dimension_error("backward root must be scalar, got " + root->value.shape_str());
    if (!root->requires_grad)
        return;
    std::vector<Node*> order;
    topo_sort(root, order);
    root->ensure_grad();
    root->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && n->grad_alloc)
            n->backward(*n);
    }
}

// ---------------------------------------------------------------------------
// elementwise

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a->value.same_shape(b->value))
        throw dimension_error(std::string(op) + ": shape mismatch " + a->value.shape_str() +
                              " vs " + b->value.shape_str());
}

} // namespace

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i)
        out[i] += b->value[i];
    return make_op(std::move(out), {a, b}, [](Node& self) {
        for (int k = 0; k < 2; ++k)
            if (self.parents[k]->requires_grad)
                self.parents[k]->accumulate(self.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i)
        out[i] -= b->value[i];
    return make_op(std::move(out), {a, b}, [](Node& self) {
        if (self.parents[0]->requires_grad)
            self.parents[0]->accumulate(self.grad);
        if (self.parents[1]->requires_grad) {
            Tensor g = self.grad;
            for (auto& x : g.vec())
                x = -x;
            self.parents[1]->accumulate(g);
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i)
        out[i] *= b->value[i];
    return make_op(std::move(out), {a, b}, [](Node& self) {
        const Tensor& av = self.parents[0]->value;
        const Tensor& bv = self.parents[1]->value;
        if (self.parents[0]->requires_grad) {
            Tensor g = self.grad;
            for (std::size_t i = 0; i < g.numel(); ++i)
                g[i] *= bv[i];
            self.parents[0]->accumulate(g);
        }
        if (self.parents[1]->requires_grad) {
            Tensor g = self.grad;
            for (std::size_t i = 0; i < g.numel(); ++i)
                g[i] *= av[i];
            self.parents[1]->accumulate(g);
        }
    });
}

Var smul(const Var& a, double k) {
    Tensor out = a->value;
    for (auto& x : out.vec())
        x *= k;
    return make_op(std::move(out), {a}, [k](Node& self) {
        Tensor g = self.grad;
        for (auto& x : g.vec())
            x *= k;
        self.parents[0]->accumulate(g);
    });
}

Var sadd(const Var& a, double k) {
    Tensor out = a->value;
    for (auto& x : out.vec())
        x += k;
    return make_op(std::move(out), {a}, [](Node& self) {
        self.parents[0]->accumulate(self.grad);
    });
}

Var square(const Var& a) {
    Tensor out = a->value;
    for (auto& x : out.vec())
        x *= x;
    return make_op(std::move(out), {a}, [](Node& self) {
        const Tensor& av = self.parents[0]->value;
        Tensor g = self.grad;
        for (std::size_t i = 0; i < g.numel(); ++i)
            g[i] *= 2.0 * av[i];
        self.parents[0]->accumulate(g);
    });
}

Var log_op(const Var& a) {
    Tensor out = a->value;
    for (auto& x : out.vec()) {
        if (!(x > 0.0))
            throw domain_error("log of non-positive value");
        x = std::log(x);
    }
    return make_op(std::move(out), {a}, [](Node& self) {
        const Tensor& av = self.parents[0]->value;
        Tensor g = self.grad;
        for (std::size_t i = 0; i < g.numel(); ++i)
            g[i] /= av[i];
        self.parents[0]->accumulate(g);
    });
}

Var exp_op(const Var& a) {
    Tensor out = a->value;
    for (auto& x : out.vec())
        x = std::exp(x);
    return make_op(std::move(out), {a}, [](Node& self) {
        const Tensor& ov = self.value;
        Tensor g = self.grad;
        for (std::size_t i = 0; i < g.numel(); ++i)
            g[i] *= ov[i];
        self.parents[0]->accumulate(g);
    });
}

namespace {
inline double softplus_val(double x) {
    return x > 30.0 ? x : std::log1p(std::exp(x));
}
inline double sigmoid_val(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}
} // namespace

Var softplus(const Var& a) {
    Tensor out = a->value;
    for (auto& x : out.vec())
        x = softplus_val(x);
    return make_op(std::move(out), {a}, [](Node& self) {
        const Tensor& av = self.parents[0]->value;
        Tensor g = self.grad;
        for (std::size_t i = 0; i < g.numel(); ++i)
            g[i] *= sigmoid_val(av[i]);
        self.parents[0]->accumulate(g);
    });
}

Var relu(const Var& a) {
    Tensor out = a->value;
    for (auto& x : out.vec())
        x = x > 0.0 ? x : 0.0;
    return make_op(std::move(out), {a}, [](Node& self) {
        const Tensor& av = self.parents[0]->value;
        Tensor g = self.grad;
        for (std::size_t i = 0; i < g.numel(); ++i)
            if (av[i] <= 0.0)
                g[i] = 0.0;
        self.parents[0]->accumulate(g);
    });
}

Var sum(const Var& a) {
    double s = 0.0;
    for (double x : a->value.vec())
        s += x;
    return make_op(Tensor::scalar(s), {a}, [](Node& self) {
        Tensor g = Tensor::full(self.parents[0]->value.shape(), self.grad[0]);
        self.parents[0]->accumulate(g);
    });
}

Var mean(const Var& a) {
    return smul(sum(a), 1.0 / static_cast<double>(a->value.numel()));
}

Var reshape(const Var& a, std::vector<std::size_t> shape) {
    Tensor out = a->value.reshaped(shape);
    return make_op(std::move(out), {a}, [](Node& self) {
        self.parents[0]->accumulate(self.grad.reshaped(self.parents[0]->value.shape()));
    });
}

// ---------------------------------------------------------------------------
// row broadcasts

namespace {

void check_rowvec(const Var& a, const Var& v, const char* op) {
    if (a->value.rank() != 2)
        throw dimension_error(std::string(op) + ": matrix operand must be 2-D, got " +
                              a->value.shape_str());
    if (v->value.numel() != a->value.dim(1))
        throw dimension_error(std::string(op) + ": vector length " +
                              std::to_string(v->value.numel()) + " vs columns axis " +
                              std::to_string(a->value.dim(1)));
}

} // namespace

Var add_rowvec(const Var& a, const Var& bias) {
    check_rowvec(a, bias, "add_rowvec");
    const std::size_t rows = a->value.dim(0), cols = a->value.dim(1);
    Tensor out = a->value;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            out[r * cols + c] += bias->value[c];
    return make_op(std::move(out), {a, bias}, [rows, cols](Node& self) {
        if (self.parents[0]->requires_grad)
            self.parents[0]->accumulate(self.grad);
        if (self.parents[1]->requires_grad) {
            Tensor g({cols});
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c)
                    g[c] += self.grad[r * cols + c];
            self.parents[1]->accumulate(g);
        }
    });
}

Var mul_rowvec(const Var& a, const Var& scale) {
    check_rowvec(a, scale, "mul_rowvec");
    const std::size_t rows = a->value.dim(0), cols = a->value.dim(1);
    Tensor out = a->value;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            out[r * cols + c] *= scale->value[c];
    return make_op(std::move(out), {a, scale}, [rows, cols](Node& self) {
        const Tensor& av = self.parents[0]->value;
        const Tensor& sv = self.parents[1]->value;
        if (self.parents[0]->requires_grad) {
            Tensor g = self.grad;
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c)
                    g[r * cols + c] *= sv[c];
            self.parents[0]->accumulate(g);
        }
        if (self.parents[1]->requires_grad) {
            Tensor g({cols});
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c)
                    g[c] += self.grad[r * cols + c] * av[r * cols + c];
            self.parents[1]->accumulate(g);
        }
    });
}

// ---------------------------------------------------------------------------
// matmul

Tensor mm(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw dimension_error("matmul needs matrices, got " + a.shape_str() + " and " + b.shape_str());
    if (a.dim(1) != b.dim(0))
        throw dimension_error("matmul inner axis mismatch: " + a.shape_str() + " vs " + b.shape_str());
    const std::size_t n = a.dim(0), d = a.dim(1), c = b.dim(1);
    Tensor out({n, c});
    // i-k-j order: streams through b rows, cache-friendly without blocking
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = a.data() + i * d;
        double* orow = out.data() + i * c;
        for (std::size_t k = 0; k < d; ++k) {
            const double aik = arow[k];
            if (aik == 0.0)
                continue;
            const double* brow = b.data() + k * c;
            for (std::size_t j = 0; j < c; ++j)
                orow[j] += aik * brow[j];
        }
    }
    return out;
}

namespace {

Tensor mm_transpose_a(const Tensor& a, const Tensor& b) {
    // aᵀ * b where a is [N x D], b is [N x C] -> [D x C]
    const std::size_t n = a.dim(0), d = a.dim(1), c = b.dim(1);
    Tensor out({d, c});
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = a.data() + i * d;
        const double* brow = b.data() + i * c;
        for (std::size_t k = 0; k < d; ++k) {
            const double aik = arow[k];
            if (aik == 0.0)
                continue;
            double* orow = out.data() + k * c;
            for (std::size_t j = 0; j < c; ++j)
                orow[j] += aik * brow[j];
        }
    }
    return out;
}

Tensor mm_transpose_b(const Tensor& a, const Tensor& b) {
    // a * bᵀ where a is [N x C], b is [D x C] -> [N x D]
    const std::size_t n = a.dim(0), c = a.dim(1), d = b.dim(0);
    Tensor out({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = a.data() + i * c;
        double* orow = out.data() + i * d;
        for (std::size_t k = 0; k < d; ++k) {
            const double* brow = b.data() + k * c;
            double acc = 0.0;
            for (std::size_t j = 0; j < c; ++j)
                acc += arow[j] * brow[j];
            orow[k] = acc;
        }
    }
    return out;
}

} // namespace

Var matmul(const Var& a, const Var& b) {
    Tensor out = mm(a->value, b->value);
    return make_op(std::move(out), {a, b}, [](Node& self) {
        const Tensor& av = self.parents[0]->value;
        const Tensor& bv = self.parents[1]->value;
        if (self.parents[0]->requires_grad)
            self.parents[0]->accumulate(mm_transpose_b(self.grad, bv));
        if (self.parents[1]->requires_grad)
            self.parents[1]->accumulate(mm_transpose_a(av, self.grad));
    });
}

// ---------------------------------------------------------------------------
// straight-through quantizer

namespace {

Var ste_like(const Var& a, double clip, bool quantize) {
    if (clip <= 0.0)
        throw domain_error("ste clip must be positive");
    Tensor out = a->value;
    for (auto& x : out.vec()) {
        if (std::isnan(x))
            throw numeric_error("NaN input to quantizer");
        if (quantize)
            x = x >= 0.0 ? 1.0 : -1.0;
        else
            x = std::clamp(x, -clip, clip);
    }
    return make_op(std::move(out), {a}, [clip](Node& self) {
        const Tensor& av = self.parents[0]->value;
        Tensor g = self.grad;
        for (std::size_t i = 0; i < g.numel(); ++i)
            if (std::abs(av[i]) > clip)
                g[i] = 0.0;
        self.parents[0]->accumulate(g);
    });
}

} // namespace

Var sign_ste(const Var& a, double clip) { return ste_like(a, clip, true); }
Var hardtanh(const Var& a, double clip) { return ste_like(a, clip, false); }

// ---------------------------------------------------------------------------
// convolution plumbing

namespace {

struct ConvGeom {
    std::size_t channels, height, width, kernel, pad;
    std::size_t out_h() const { return height + 2 * pad - kernel + 1; }
    std::size_t out_w() const { return width + 2 * pad - kernel + 1; }
    std::size_t positions() const { return out_h() * out_w(); }
    std::size_t patch() const { return kernel * kernel * channels; }
};

void im2col_fill(const double* img, double* cols, const ConvGeom& g) {
    // one sample: cols is [positions x patch], column c*K*K + kh*K + kw
    const std::size_t K = g.kernel, P = g.positions(), W = g.width, H = g.height;
    const std::size_t ow = g.out_w();
    for (std::size_t p = 0; p < P; ++p) {
        const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(p / ow) - static_cast<std::ptrdiff_t>(g.pad);
        const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(p % ow) - static_cast<std::ptrdiff_t>(g.pad);
        double* crow = cols + p * g.patch();
        for (std::size_t c = 0; c < g.channels; ++c) {
            const double* chan = img + c * H * W;
            for (std::size_t kh = 0; kh < K; ++kh) {
                const std::ptrdiff_t y = oy + static_cast<std::ptrdiff_t>(kh);
                for (std::size_t kw = 0; kw < K; ++kw) {
                    const std::ptrdiff_t x = ox + static_cast<std::ptrdiff_t>(kw);
                    double v = 0.0;
                    if (y >= 0 && y < static_cast<std::ptrdiff_t>(H) && x >= 0 &&
                        x < static_cast<std::ptrdiff_t>(W))
                        v = chan[static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x)];
                    crow[c * K * K + kh * K + kw] = v;
                }
            }
        }
    }
}

void col2im_add(const double* cols, double* img, const ConvGeom& g) {
    const std::size_t K = g.kernel, P = g.positions(), W = g.width, H = g.height;
    const std::size_t ow = g.out_w();
    for (std::size_t p = 0; p < P; ++p) {
        const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(p / ow) - static_cast<std::ptrdiff_t>(g.pad);
        const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(p % ow) - static_cast<std::ptrdiff_t>(g.pad);
        const double* crow = cols + p * g.patch();
        for (std::size_t c = 0; c < g.channels; ++c) {
            double* chan = img + c * H * W;
            for (std::size_t kh = 0; kh < K; ++kh) {
                const std::ptrdiff_t y = oy + static_cast<std::ptrdiff_t>(kh);
                if (y < 0 || y >= static_cast<std::ptrdiff_t>(H))
                    continue;
                for (std::size_t kw = 0; kw < K; ++kw) {
                    const std::ptrdiff_t x = ox + static_cast<std::ptrdiff_t>(kw);
                    if (x < 0 || x >= static_cast<std::ptrdiff_t>(W))
                        continue;
                    chan[static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x)] +=
                        crow[c * K * K + kh * K + kw];
                }
            }
        }
    }
}

} // namespace

Tensor im2col_tensor(const Tensor& x, std::size_t channels, std::size_t height, std::size_t width,
                     std::size_t kernel, std::size_t pad) {
    if (x.rank() != 2 || x.dim(1) != channels * height * width)
        throw dimension_error("im2col input must be [N x C*H*W], got " + x.shape_str());
    if (kernel == 0 || kernel > height + 2 * pad || kernel > width + 2 * pad)
        throw dimension_error("im2col kernel does not fit padded image");
    ConvGeom g{channels, height, width, kernel, pad};
    const std::size_t n = x.dim(0);
    Tensor cols({n * g.positions(), g.patch()});
    for (std::size_t i = 0; i < n; ++i)
        im2col_fill(x.data() + i * x.dim(1), cols.data() + i * g.positions() * g.patch(), g);
    return cols;
}

Var im2col(const Var& x, std::size_t channels, std::size_t height, std::size_t width,
           std::size_t kernel, std::size_t pad) {
    Tensor cols = im2col_tensor(x->value, channels, height, width, kernel, pad);
    ConvGeom g{channels, height, width, kernel, pad};
    const std::size_t n = x->value.dim(0);
    return make_op(std::move(cols), {x}, [g, n](Node& self) {
        Tensor gx = Tensor::zeros(self.parents[0]->value.shape());
        const std::size_t chw = g.channels * g.height * g.width;
        for (std::size_t i = 0; i < n; ++i)
            col2im_add(self.grad.data() + i * g.positions() * g.patch(), gx.data() + i * chw, g);
        self.parents[0]->accumulate(gx);
    });
}

Var conv_pack(const Var& cols, std::size_t batch, std::size_t positions, std::size_t channels) {
    const Tensor& v = cols->value;
    if (v.rank() != 2 || v.dim(0) != batch * positions || v.dim(1) != channels)
        throw dimension_error("conv_pack expects [N*P x C], got " + v.shape_str());
    Tensor out({batch, channels * positions});
    for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t p = 0; p < positions; ++p)
            for (std::size_t c = 0; c < channels; ++c)
                out[n * channels * positions + c * positions + p] = v[(n * positions + p) * channels + c];
    return make_op(std::move(out), {cols}, [batch, positions, channels](Node& self) {
        Tensor g({batch * positions, channels});
        for (std::size_t n = 0; n < batch; ++n)
            for (std::size_t p = 0; p < positions; ++p)
                for (std::size_t c = 0; c < channels; ++c)
                    g[(n * positions + p) * channels + c] =
                        self.grad[n * channels * positions + c * positions + p];
        self.parents[0]->accumulate(g);
    });
}

Var maxpool2(const Var& x, std::size_t channels, std::size_t height, std::size_t width) {
    const Tensor& v = x->value;
    if (v.rank() != 2 || v.dim(1) != channels * height * width)
        throw dimension_error("maxpool2 input must be [N x C*H*W], got " + v.shape_str());
    const std::size_t n = v.dim(0), oh = height / 2, ow = width / 2;
    if (oh == 0 || ow == 0)
        throw dimension_error("maxpool2 on degenerate spatial extent");
    Tensor out({n, channels * oh * ow});
    auto argmax = std::make_shared<std::vector<std::size_t>>(out.numel());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < channels; ++c) {
            const double* chan = v.data() + i * v.dim(1) + c * height * width;
            for (std::size_t y = 0; y < oh; ++y) {
                for (std::size_t xx = 0; xx < ow; ++xx) {
                    std::size_t best = (2 * y) * width + 2 * xx;
                    for (std::size_t dy = 0; dy < 2; ++dy)
                        for (std::size_t dx = 0; dx < 2; ++dx) {
                            std::size_t idx = (2 * y + dy) * width + (2 * xx + dx);
                            if (chan[idx] > chan[best])
                                best = idx;
                        }
                    const std::size_t o = i * out.dim(1) + c * oh * ow + y * ow + xx;
                    out[o] = chan[best];
                    (*argmax)[o] = i * v.dim(1) + c * height * width + best;
                }
            }
        }
    }
    return make_op(std::move(out), {x}, [argmax](Node& self) {
        Tensor g = Tensor::zeros(self.parents[0]->value.shape());
        for (std::size_t o = 0; o < self.grad.numel(); ++o)
            g[(*argmax)[o]] += self.grad[o];
        self.parents[0]->accumulate(g);
    });
}

// ---------------------------------------------------------------------------
// batch normalization core

Var batch_normalize(const Var& z, double eps, Tensor* batch_mean, Tensor* batch_var) {
    const Tensor& v = z->value;
    if (v.rank() != 2)
        throw dimension_error("batch_normalize expects [N x C], got " + v.shape_str());
    const std::size_t n = v.dim(0), c = v.dim(1);
    if (n < 2)
        throw Error(ErrorKind::domain, "batch statistics need at least 2 samples");
    if (eps <= 0.0)
        throw domain_error("normalization eps must be positive");

    Tensor mu({c}), var({c});
    for (std::size_t j = 0; j < c; ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            m += v[i * c + j];
        m /= static_cast<double>(n);
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double d = v[i * c + j] - m;
            s += d * d;
        }
        mu[j] = m;
        var[j] = s / static_cast<double>(n);
    }
    if (batch_mean)
        *batch_mean = mu;
    if (batch_var)
        *batch_var = var;

    auto denom = std::make_shared<Tensor>(Tensor({c}));
    auto guarded = std::make_shared<std::vector<bool>>(c);
    for (std::size_t j = 0; j < c; ++j) {
        (*guarded)[j] = var[j] <= eps;
        (*denom)[j] = std::sqrt((*guarded)[j] ? eps : var[j]);
    }

    Tensor out({n, c});
    auto xhat = std::make_shared<Tensor>(Tensor({n, c}));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            double h = (v[i * c + j] - mu[j]) / (*denom)[j];
            (*xhat)[i * c + j] = h;
            out[i * c + j] = h;
        }

    return make_op(std::move(out), {z}, [n, c, denom, xhat, guarded](Node& self) {
        // per column: dz = (g - mean(g) - xhat * mean(g*xhat)) / denom;
        // the xhat term drops where the variance guard froze the denominator
        Tensor g({n, c});
        for (std::size_t j = 0; j < c; ++j) {
            double gm = 0.0, gxm = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                gm += self.grad[i * c + j];
                gxm += self.grad[i * c + j] * (*xhat)[i * c + j];
            }
            gm /= static_cast<double>(n);
            gxm /= static_cast<double>(n);
            const bool frozen = (*guarded)[j];
            for (std::size_t i = 0; i < n; ++i) {
                double t = self.grad[i * c + j] - gm;
                if (!frozen)
                    t -= (*xhat)[i * c + j] * gxm;
                g[i * c + j] = t / (*denom)[j];
            }
        }
        self.parents[0]->accumulate(g);
    });
}

// ---------------------------------------------------------------------------
// softmax cross-entropy

Tensor softmax_rows(const Tensor& logits) {
    if (logits.rank() != 2)
        throw dimension_error("softmax expects [N x C], got " + logits.shape_str());
    const std::size_t n = logits.dim(0), c = logits.dim(1);
    Tensor probs({n, c});
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = logits.data() + i * c;
        double mx = row[0];
        for (std::size_t j = 1; j < c; ++j)
            mx = std::max(mx, row[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j)
            z += std::exp(row[j] - mx);
        for (std::size_t j = 0; j < c; ++j)
            probs[i * c + j] = std::exp(row[j] - mx) / z;
    }
    return probs;
}

Var softmax_ce(const Var& logits, const std::vector<int>& labels) {
    const Tensor& v = logits->value;
    if (v.rank() != 2)
        throw dimension_error("softmax_ce expects [N x C] logits, got " + v.shape_str());
    const std::size_t n = v.dim(0), c = v.dim(1);
    if (labels.size() != n)
        throw dimension_error("label count " + std::to_string(labels.size()) + " vs batch " +
                              std::to_string(n));
    for (int l : labels)
        if (l < 0 || static_cast<std::size_t>(l) >= c)
            throw Error(ErrorKind::domain, "label " + std::to_string(l) + " out of [0," +
                                               std::to_string(c) + ")");

    auto probs = std::make_shared<Tensor>(softmax_rows(v));
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = v.data() + i * c;
        double mx = row[0];
        for (std::size_t j = 1; j < c; ++j)
            mx = std::max(mx, row[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j)
            z += std::exp(row[j] - mx);
        loss += std::log(z) + mx - row[labels[i]];
    }
    loss /= static_cast<double>(n);

    auto labels_copy = std::make_shared<std::vector<int>>(labels);
    return make_op(Tensor::scalar(loss), {logits}, [n, c, probs, labels_copy](Node& self) {
        const double scale = self.grad[0] / static_cast<double>(n);
        Tensor g({n, c});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j) {
                double p = (*probs)[i * c + j];
                if (static_cast<std::size_t>((*labels_copy)[i]) == j)
                    p -= 1.0;
                g[i * c + j] = p * scale;
            }
        self.parents[0]->accumulate(g);
    });
}

// ---------------------------------------------------------------------------
// gradient check

double grad_check(const std::function<Var()>& build, const std::vector<Var>& params, double eps) {
    if (!(eps > 0.0 && eps <= 1e-2))
        throw domain_error("grad_check eps must lie in (0, 1e-2]");

    for (const auto& p : params)
        zero_grad(p);
    Var root = build();
    if (!std::isfinite(root->value[0]))
        throw numeric_error("grad_check objective is not finite");
    backward(root);

    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params)
        analytic.push_back(p->grad_alloc ? p->grad : Tensor::zeros(p->value.shape()));

    double worst = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& v = params[k]->value;
        for (std::size_t i = 0; i < v.numel(); ++i) {
            const double saved = v[i];
            v[i] = saved + eps;
            double f_plus = build()->value[0];
            v[i] = saved - eps;
            double f_minus = build()->value[0];
            v[i] = saved;
            if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
                throw numeric_error("grad_check detected non-finite objective value");
            const double numeric = (f_plus - f_minus) / (2.0 * eps);
            const double ga = analytic[k][i];
            const double denom = std::max({std::abs(ga), std::abs(numeric), 1.0});
            worst = std::max(worst, std::abs(ga - numeric) / denom);
        }
    }
    return worst;
}

} // namespace spincim::ad
