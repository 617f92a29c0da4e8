#include "parc/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace parc::ad {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

double stable_softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

void require_same_shape(const Node* a, const Node* b, const char* op) {
    if (!a->val.same_shape(b->val))
        throw ValidationError(std::string(op) + ": tensor shape mismatch");
}

// Gathers the replicate-padded kh*kw neighborhood of every pixel into a
// column-major K x P matrix (K = cin*kh*kw, P = h*w). Column p holds the
// receptive field of output pixel p, so conv forward is a single GEMM.
void im2col(const Tensor& x, int cin, int kh, int kw, Eigen::MatrixXd& cols) {
    const int h = x.h, w = x.w;
    const int K = cin * kh * kw;
    const int rh = kh / 2, rw = kw / 2;
    cols.resize(K, static_cast<Eigen::Index>(h) * w);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            double* col = cols.data() + (static_cast<size_t>(i) * w + j) * K;
            int k = 0;
            for (int ci = 0; ci < cin; ++ci) {
                const double* xc = x.channel(ci);
                for (int di = -rh; di <= rh; ++di) {
                    int ii = std::clamp(i + di, 0, h - 1);
                    const double* row = xc + static_cast<size_t>(ii) * w;
                    for (int dj = -rw; dj <= rw; ++dj) {
                        col[k++] = row[std::clamp(j + dj, 0, w - 1)];
                    }
                }
            }
        }
    }
}

struct LeafNode : Node {};

struct AddNode : Node {
    Node *a, *b;
    void backprop() override {
        if (a->needs_grad) {
            Tensor& ga = a->ensure_grad();
            for (size_t n = 0; n < grad.v.size(); ++n) ga.v[n] += grad.v[n];
        }
        if (b->needs_grad) {
            Tensor& gb = b->ensure_grad();
            for (size_t n = 0; n < grad.v.size(); ++n) gb.v[n] += grad.v[n];
        }
    }
};

struct SubNode : Node {
    Node *a, *b;
    void backprop() override {
        if (a->needs_grad) {
            Tensor& ga = a->ensure_grad();
            for (size_t n = 0; n < grad.v.size(); ++n) ga.v[n] += grad.v[n];
        }
        if (b->needs_grad) {
            Tensor& gb = b->ensure_grad();
            for (size_t n = 0; n < grad.v.size(); ++n) gb.v[n] -= grad.v[n];
        }
    }
};

struct MulNode : Node {
    Node *a, *b;
    void backprop() override {
        if (a->needs_grad) {
            Tensor& ga = a->ensure_grad();
            for (size_t n = 0; n < grad.v.size(); ++n) ga.v[n] += grad.v[n] * b->val.v[n];
        }
        if (b->needs_grad) {
            Tensor& gb = b->ensure_grad();
            for (size_t n = 0; n < grad.v.size(); ++n) gb.v[n] += grad.v[n] * a->val.v[n];
        }
    }
};

struct ScaleNode : Node {
    Node* a;
    double c;
    void backprop() override {
        if (!a->needs_grad) return;
        Tensor& ga = a->ensure_grad();
        for (size_t n = 0; n < grad.v.size(); ++n) ga.v[n] += grad.v[n] * c;
    }
};

struct AbsNode : Node {
    Node* a;
    void backprop() override {
        if (!a->needs_grad) return;
        Tensor& ga = a->ensure_grad();
        for (size_t n = 0; n < grad.v.size(); ++n) {
            double x = a->val.v[n];
            double s = (x > 0.0) - (x < 0.0);
            ga.v[n] += grad.v[n] * s;
        }
    }
};

struct TanhNode : Node {
    Node* a;
    void backprop() override {
        if (!a->needs_grad) return;
        Tensor& ga = a->ensure_grad();
        for (size_t n = 0; n < grad.v.size(); ++n)
            ga.v[n] += grad.v[n] * (1.0 - val.v[n] * val.v[n]);
    }
};

struct ReluNode : Node {
    Node* a;
    void backprop() override {
        if (!a->needs_grad) return;
        Tensor& ga = a->ensure_grad();
        for (size_t n = 0; n < grad.v.size(); ++n)
            if (a->val.v[n] > 0.0) ga.v[n] += grad.v[n];
    }
};

struct SoftplusNode : Node {
    Node* a;
    void backprop() override {
        if (!a->needs_grad) return;
        Tensor& ga = a->ensure_grad();
        for (size_t n = 0; n < grad.v.size(); ++n)
            ga.v[n] += grad.v[n] * stable_sigmoid(a->val.v[n]);
    }
};

struct MulScalarNode : Node {
    Node *a, *s;
    void backprop() override {
        double sv = s->val.v[0];
        if (a->needs_grad) {
            Tensor& ga = a->ensure_grad();
            for (size_t n = 0; n < grad.v.size(); ++n) ga.v[n] += grad.v[n] * sv;
        }
        if (s->needs_grad) {
            double acc = 0.0;
            for (size_t n = 0; n < grad.v.size(); ++n) acc += grad.v[n] * a->val.v[n];
            s->ensure_grad().v[0] += acc;
        }
    }
};

struct ChanAffineNode : Node {
    Node *x, *scl, *shift;
    void backprop() override {
        const int plane = val.plane();
        for (int c = 0; c < val.c; ++c) {
            const double* g = grad.channel(c);
            if (x->needs_grad) {
                double* gx = x->ensure_grad().channel(c);
                double sv = scl->val.v[static_cast<size_t>(c)];
                for (int n = 0; n < plane; ++n) gx[n] += g[n] * sv;
            }
            if (scl->needs_grad) {
                const double* xv = x->val.channel(c);
                double acc = 0.0;
                for (int n = 0; n < plane; ++n) acc += g[n] * xv[n];
                scl->ensure_grad().v[static_cast<size_t>(c)] += acc;
            }
            if (shift->needs_grad) {
                double acc = 0.0;
                for (int n = 0; n < plane; ++n) acc += g[n];
                shift->ensure_grad().v[static_cast<size_t>(c)] += acc;
            }
        }
    }
};

struct Conv2dNode : Node {
    Node *x, *k, *b;
    int cout, cin, kh, kw;

    void backprop() override {
        const int P = x->val.plane();
        const int K = cin * kh * kw;
        Eigen::MatrixXd cols;
        im2col(x->val, cin, kh, kw, cols);  // rebuilt rather than cached
        CMapRM G(grad.v.data(), cout, P);

        if (k->needs_grad) {
            MapRM dW(k->ensure_grad().v.data(), cout, K);
            dW.noalias() += G * cols.transpose();
        }
        if (b->needs_grad) {
            // Plain loop, not an Eigen redux: redux over a Map peels scalars
            // until the pointer is SIMD-aligned, so its summation order (and
            // rounding) would depend on the heap address of the gradient
            // buffer. Same-seed runs must be bit-identical.
            Tensor& db = b->ensure_grad();
            for (int co = 0; co < cout; ++co) {
                const double* g = grad.v.data() + static_cast<size_t>(co) * P;
                double acc = 0.0;
                for (int n = 0; n < P; ++n) acc += g[n];
                db.v[static_cast<size_t>(co)] += acc;
            }
        }
        if (x->needs_grad) {
            CMapRM W(k->val.v.data(), cout, K);
            Eigen::MatrixXd dcols = W.transpose() * G;  // K x P
            Tensor& gx = x->ensure_grad();
            const int h = x->val.h, w = x->val.w;
            const int rh = kh / 2, rw = kw / 2;
            for (int i = 0; i < h; ++i) {
                for (int j = 0; j < w; ++j) {
                    const double* col = dcols.data() + (static_cast<size_t>(i) * w + j) * K;
                    int kk = 0;
                    for (int ci = 0; ci < cin; ++ci) {
                        double* gc = gx.channel(ci);
                        for (int di = -rh; di <= rh; ++di) {
                            int ii = std::clamp(i + di, 0, h - 1);
                            double* row = gc + static_cast<size_t>(ii) * w;
                            for (int dj = -rw; dj <= rw; ++dj) {
                                row[std::clamp(j + dj, 0, w - 1)] += col[kk++];
                            }
                        }
                    }
                }
            }
        }
    }
};

enum class StencilKind { dx, dy, lap };

struct StencilNode : Node {
    Node* a;
    StencilKind kind;
    double dx;
    detail::LineBoundary boundary;

    void backprop() override {
        if (!a->needs_grad) return;
        Tensor& ga = a->ensure_grad();
        const int h = val.h, w = val.w;
        for (int c = 0; c < val.c; ++c) {
            const double* g = grad.channel(c);
            double* gi = ga.channel(c);
            switch (kind) {
                case StencilKind::dx:
                    for (int i = 0; i < h; ++i)
                        detail::deriv_line_adjoint(g + static_cast<size_t>(i) * w,
                                                   gi + static_cast<size_t>(i) * w, w, 1, dx,
                                                   boundary);
                    break;
                case StencilKind::dy:
                    for (int j = 0; j < w; ++j)
                        detail::deriv_line_adjoint(g + j, gi + j, h, w, dx, boundary);
                    break;
                case StencilKind::lap:
                    for (int i = 0; i < h; ++i)
                        detail::second_line_adjoint(g + static_cast<size_t>(i) * w,
                                                    gi + static_cast<size_t>(i) * w, w, 1, dx,
                                                    boundary);
                    for (int j = 0; j < w; ++j)
                        detail::second_line_adjoint(g + j, gi + j, h, w, dx, boundary);
                    break;
            }
        }
    }
};

struct ConcatNode : Node {
    std::vector<Node*> parts;
    void backprop() override {
        int c0 = 0;
        for (Node* p : parts) {
            if (p->needs_grad) {
                Tensor& gp = p->ensure_grad();
                const size_t count = gp.v.size();
                const double* src = grad.channel(c0);
                for (size_t n = 0; n < count; ++n) gp.v[n] += src[n];
            }
            c0 += p->val.c;
        }
    }
};

struct SliceNode : Node {
    Node* a;
    int c0;
    void backprop() override {
        if (!a->needs_grad) return;
        Tensor& ga = a->ensure_grad();
        double* dst = ga.channel(c0);
        for (size_t n = 0; n < grad.v.size(); ++n) dst[n] += grad.v[n];
    }
};

struct SumNode : Node {
    Node* a;
    void backprop() override {
        if (!a->needs_grad) return;
        Tensor& ga = a->ensure_grad();
        double g = grad.v[0];
        for (size_t n = 0; n < ga.v.size(); ++n) ga.v[n] += g;
    }
};

}  // namespace

Node* Tape::leaf(Tensor value, bool needs_grad) {
    auto n = std::make_unique<LeafNode>();
    n->val = std::move(value);
    n->needs_grad = needs_grad;
    return push(std::move(n));
}

Node* Tape::scalar(double value, bool needs_grad) {
    Tensor t(1, 1, 1);
    t.v[0] = value;
    return leaf(std::move(t), needs_grad);
}

Node* Tape::add(Node* a, Node* b) {
    require_same_shape(a, b, "add");
    auto n = std::make_unique<AddNode>();
    n->a = a;
    n->b = b;
    n->val = a->val;
    for (size_t i = 0; i < n->val.v.size(); ++i) n->val.v[i] += b->val.v[i];
    n->needs_grad = a->needs_grad || b->needs_grad;
    return push(std::move(n));
}

Node* Tape::sub(Node* a, Node* b) {
    require_same_shape(a, b, "sub");
    auto n = std::make_unique<SubNode>();
    n->a = a;
    n->b = b;
    n->val = a->val;
    for (size_t i = 0; i < n->val.v.size(); ++i) n->val.v[i] -= b->val.v[i];
    n->needs_grad = a->needs_grad || b->needs_grad;
    return push(std::move(n));
}

Node* Tape::mul(Node* a, Node* b) {
    require_same_shape(a, b, "mul");
    auto n = std::make_unique<MulNode>();
    n->a = a;
    n->b = b;
    n->val = a->val;
    for (size_t i = 0; i < n->val.v.size(); ++i) n->val.v[i] *= b->val.v[i];
    n->needs_grad = a->needs_grad || b->needs_grad;
    return push(std::move(n));
}

Node* Tape::scale(Node* a, double c) {
    auto n = std::make_unique<ScaleNode>();
    n->a = a;
    n->c = c;
    n->val = a->val;
    for (double& x : n->val.v) x *= c;
    n->needs_grad = a->needs_grad;
    return push(std::move(n));
}

Node* Tape::abs(Node* a) {
    auto n = std::make_unique<AbsNode>();
    n->a = a;
    n->val = a->val;
    for (double& x : n->val.v) x = std::fabs(x);
    n->needs_grad = a->needs_grad;
    return push(std::move(n));
}

Node* Tape::tanh(Node* a) {
    auto n = std::make_unique<TanhNode>();
    n->a = a;
    n->val = a->val;
    for (double& x : n->val.v) x = std::tanh(x);
    n->needs_grad = a->needs_grad;
    return push(std::move(n));
}

Node* Tape::relu(Node* a) {
    auto n = std::make_unique<ReluNode>();
    n->a = a;
    n->val = a->val;
    for (double& x : n->val.v) x = x > 0.0 ? x : 0.0;
    n->needs_grad = a->needs_grad;
    return push(std::move(n));
}

Node* Tape::softplus(Node* a) {
    auto n = std::make_unique<SoftplusNode>();
    n->a = a;
    n->val = a->val;
    for (double& x : n->val.v) x = stable_softplus(x);
    n->needs_grad = a->needs_grad;
    return push(std::move(n));
}

Node* Tape::mul_scalar(Node* a, Node* s) {
    if (s->val.size() != 1) throw ValidationError("mul_scalar: scale must be a 1-element node");
    auto n = std::make_unique<MulScalarNode>();
    n->a = a;
    n->s = s;
    n->val = a->val;
    double sv = s->val.v[0];
    for (double& x : n->val.v) x *= sv;
    n->needs_grad = a->needs_grad || s->needs_grad;
    return push(std::move(n));
}

Node* Tape::chan_affine(Node* x, Node* scl, Node* shift) {
    if (scl->val.size() != static_cast<size_t>(x->val.c) ||
        shift->val.size() != static_cast<size_t>(x->val.c))
        throw ValidationError("chan_affine: per-channel parameter size mismatch");
    auto n = std::make_unique<ChanAffineNode>();
    n->x = x;
    n->scl = scl;
    n->shift = shift;
    n->val = x->val;
    const int plane = x->val.plane();
    for (int c = 0; c < x->val.c; ++c) {
        double a = scl->val.v[static_cast<size_t>(c)];
        double b = shift->val.v[static_cast<size_t>(c)];
        double* out = n->val.channel(c);
        for (int i = 0; i < plane; ++i) out[i] = a * out[i] + b;
    }
    n->needs_grad = x->needs_grad || scl->needs_grad || shift->needs_grad;
    return push(std::move(n));
}

Node* Tape::conv2d(Node* x, Node* kernel, Node* bias, int cout, int cin, int kh, int kw) {
    if (kh < 1 || kw < 1 || kh % 2 == 0 || kw % 2 == 0)
        throw ValidationError("conv2d: kernel sides must be odd and positive");
    if (x->val.c != cin) throw ValidationError("conv2d: input channel count mismatch");
    if (kernel->val.size() != static_cast<size_t>(cout) * cin * kh * kw)
        throw ValidationError("conv2d: kernel element count mismatch");
    if (bias->val.size() != static_cast<size_t>(cout))
        throw ValidationError("conv2d: bias element count mismatch");

    auto n = std::make_unique<Conv2dNode>();
    n->x = x;
    n->k = kernel;
    n->b = bias;
    n->cout = cout;
    n->cin = cin;
    n->kh = kh;
    n->kw = kw;
    n->val = Tensor(cout, x->val.h, x->val.w);

    const int P = x->val.plane();
    const int K = cin * kh * kw;
    Eigen::MatrixXd cols;
    im2col(x->val, cin, kh, kw, cols);
    CMapRM W(kernel->val.v.data(), cout, K);
    MapRM Y(n->val.v.data(), cout, P);
    Y.noalias() = W * cols;
    for (int co = 0; co < cout; ++co) Y.row(co).array() += bias->val.v[static_cast<size_t>(co)];

    n->needs_grad = x->needs_grad || kernel->needs_grad || bias->needs_grad;
    return push(std::move(n));
}

namespace {

std::unique_ptr<Node> make_stencil(Node* a, StencilKind kind, double dx,
                                   detail::LineBoundary b) {
    auto n = std::make_unique<StencilNode>();
    n->a = a;
    n->kind = kind;
    n->dx = dx;
    n->boundary = b;
    n->val = Tensor(a->val.c, a->val.h, a->val.w);
    const int h = a->val.h, w = a->val.w;
    for (int c = 0; c < a->val.c; ++c) {
        const double* src = a->val.channel(c);
        double* dst = n->val.channel(c);
        switch (kind) {
            case StencilKind::dx:
                for (int i = 0; i < h; ++i)
                    detail::deriv_line(src + static_cast<size_t>(i) * w,
                                       dst + static_cast<size_t>(i) * w, w, 1, dx, b);
                break;
            case StencilKind::dy:
                for (int j = 0; j < w; ++j) detail::deriv_line(src + j, dst + j, h, w, dx, b);
                break;
            case StencilKind::lap:
                for (int i = 0; i < h; ++i)
                    detail::second_line(src + static_cast<size_t>(i) * w,
                                        dst + static_cast<size_t>(i) * w, w, 1, dx, b);
                for (int j = 0; j < w; ++j) detail::second_line(src + j, dst + j, h, w, dx, b);
                break;
        }
    }
    n->needs_grad = a->needs_grad;
    return n;
}

}  // namespace

Node* Tape::deriv_x(Node* a, double dx, detail::LineBoundary b) {
    if (a->val.h < 4 || a->val.w < 4) throw ValidationError("deriv_x: grid too small");
    return push(make_stencil(a, StencilKind::dx, dx, b));
}

Node* Tape::deriv_y(Node* a, double dx, detail::LineBoundary b) {
    if (a->val.h < 4 || a->val.w < 4) throw ValidationError("deriv_y: grid too small");
    return push(make_stencil(a, StencilKind::dy, dx, b));
}

Node* Tape::laplacian(Node* a, double dx, detail::LineBoundary b) {
    if (a->val.h < 4 || a->val.w < 4) throw ValidationError("laplacian: grid too small");
    return push(make_stencil(a, StencilKind::lap, dx, b));
}

Node* Tape::concat(const std::vector<Node*>& parts) {
    if (parts.empty()) throw ValidationError("concat: no inputs");
    int c = 0;
    for (Node* p : parts) {
        if (p->val.h != parts[0]->val.h || p->val.w != parts[0]->val.w)
            throw ValidationError("concat: spatial shape mismatch");
        c += p->val.c;
    }
    auto n = std::make_unique<ConcatNode>();
    n->parts = parts;
    n->val = Tensor(c, parts[0]->val.h, parts[0]->val.w);
    int c0 = 0;
    for (Node* p : parts) {
        std::copy(p->val.v.begin(), p->val.v.end(), n->val.channel(c0));
        c0 += p->val.c;
        n->needs_grad = n->needs_grad || p->needs_grad;
    }
    return push(std::move(n));
}

Node* Tape::slice_channels(Node* a, int c0, int c1) {
    if (c0 < 0 || c1 <= c0 || c1 > a->val.c) throw ValidationError("slice_channels: bad range");
    auto n = std::make_unique<SliceNode>();
    n->a = a;
    n->c0 = c0;
    n->val = Tensor(c1 - c0, a->val.h, a->val.w);
    std::copy(a->val.channel(c0), a->val.channel(c0) + n->val.size(), n->val.v.begin());
    n->needs_grad = a->needs_grad;
    return push(std::move(n));
}

Node* Tape::sum_all(Node* a) {
    auto n = std::make_unique<SumNode>();
    n->a = a;
    n->val = Tensor(1, 1, 1);
    double s = 0.0;
    for (double x : a->val.v) s += x;
    n->val.v[0] = s;
    n->needs_grad = a->needs_grad;
    return push(std::move(n));
}

Node* Tape::mean_all(Node* a) {
    return scale(sum_all(a), 1.0 / static_cast<double>(a->val.size()));
}

void Tape::backward(Node* root) {
    if (root->val.size() != 1) throw ValidationError("backward: root must be a scalar node");
    // Fresh accumulators every pass.
    size_t root_idx = nodes_.size();
    for (size_t i = 0; i < nodes_.size(); ++i) {
        nodes_[i]->grad = Tensor();
        if (nodes_[i].get() == root) root_idx = i;
    }
    if (root_idx == nodes_.size()) throw ValidationError("backward: root not on this tape");
    root->ensure_grad().v[0] = 1.0;
    for (size_t i = root_idx + 1; i-- > 0;) {
        Node* n = nodes_[i].get();
        if (n->needs_grad && !n->grad.v.empty()) n->backprop();
    }
}

Tensor Tape::grad_of(Node* leaf) const {
    if (!leaf->grad.v.empty()) return leaf->grad;
    return Tensor(leaf->val.c, leaf->val.h, leaf->val.w);
}

}  // namespace parc::ad
