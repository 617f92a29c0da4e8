#pragma once

#include <memory>
#include <vector>

#include "parc/detail/stencil_lines.hpp"
#include "parc/tensor.hpp"

namespace parc::ad {

// Define-by-run reverse-mode engine. A Tape owns the nodes of one computation
// graph; nodes are appended in evaluation order, which is therefore a valid
// topological order for the backward sweep. The graph covers exactly what the
// model needs: convolution, pointwise maps, elementwise arithmetic, the
// finite-difference stencils as fixed linear operators, and channel plumbing.
//
// One tape is single-owner: build the forward graph, call backward() on a
// scalar root, read gradients, then discard the tape. Gradient accumulators
// are (re)zeroed at the start of every backward pass, and the sweep order is
// fixed by construction order, so gradients are bit-reproducible.

class Tape;

struct Node {
    Tensor val;
    Tensor grad;              // empty until touched by backward
    bool needs_grad = false;  // true when any ancestor leaf is differentiable

    virtual ~Node() = default;

    Tensor& ensure_grad() {
        if (grad.v.empty()) grad = Tensor(val.c, val.h, val.w);
        return grad;
    }

protected:
    friend class Tape;
    virtual void backprop() {}  // scatter this->grad into the inputs' grads
};

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Inserts an input node. needs_grad marks it as a differentiation target.
    Node* leaf(Tensor value, bool needs_grad = false);
    Node* scalar(double value, bool needs_grad = false);

    // Elementwise arithmetic (shapes must match).
    Node* add(Node* a, Node* b);
    Node* sub(Node* a, Node* b);
    Node* mul(Node* a, Node* b);
    Node* scale(Node* a, double c);
    Node* abs(Node* a);

    // Pointwise nonlinearities.
    Node* tanh(Node* a);
    Node* relu(Node* a);
    Node* softplus(Node* a);  // log(1+e^x), numerically stabilized

    // y = s * a where s is a one-element node (e.g. a learned diffusivity).
    Node* mul_scalar(Node* a, Node* s);

    // Per-channel affine map y[c] = scale[c]*x[c] + shift[c]; scale and shift
    // are one-element-per-channel nodes (normalization at the model boundary).
    Node* chan_affine(Node* x, Node* scl, Node* shift);

    // 2D cross-correlation, stride 1, replicate padding, odd kernel, bias.
    // kernel is a flat leaf of cout*cin*kh*kw values laid out [co][ci][di][dj];
    // bias is a flat leaf of cout values. Differentiable w.r.t. all three.
    Node* conv2d(Node* x, Node* kernel, Node* bias, int cout, int cin, int kh, int kw);

    // fdops stencils as fixed linear operators, applied per channel.
    Node* deriv_x(Node* a, double dx, detail::LineBoundary b);
    Node* deriv_y(Node* a, double dx, detail::LineBoundary b);
    Node* laplacian(Node* a, double dx, detail::LineBoundary b);

    // Channel plumbing.
    Node* concat(const std::vector<Node*>& parts);
    Node* slice_channels(Node* a, int c0, int c1);  // channels [c0, c1)

    // Reductions to a 1x1x1 scalar node.
    Node* sum_all(Node* a);
    Node* mean_all(Node* a);

    // Reverse sweep from a scalar root. Clears all gradient accumulators,
    // seeds d(root)/d(root) = 1, and propagates to every differentiable leaf.
    void backward(Node* root);

    // Gradient of a leaf after backward(); zeros if the leaf was unreached.
    Tensor grad_of(Node* leaf) const;

    size_t size() const { return nodes_.size(); }

private:
    template <class T>
    T* push(std::unique_ptr<T> n) {
        T* raw = n.get();
        nodes_.push_back(std::move(n));
        return raw;
    }

    std::vector<std::unique_ptr<Node>> nodes_;
};

}  // namespace parc::ad
