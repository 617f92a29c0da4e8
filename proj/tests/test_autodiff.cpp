#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "parc/autodiff.hpp"
#include "parc/fdops.hpp"
#include "parc/rng.hpp"

using namespace parc;
using detail::LineBoundary;

namespace {

Tensor random_tensor(int c, int h, int w, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(c, h, w);
    for (auto& v : t.v) v = rng.uniform(lo, hi);
    return t;
}

// Central-difference check of d(root)/d(inputs) for a graph builder that maps
// leaf nodes to a scalar root. Returns the max relative error over every
// element of every input.
using Builder = std::function<ad::Node*(ad::Tape&, const std::vector<ad::Node*>&)>;

double fd_check(const std::vector<Tensor>& inputs, const Builder& build) {
    ad::Tape tape;
    std::vector<ad::Node*> leaves;
    for (const auto& t : inputs) leaves.push_back(tape.leaf(t, true));
    ad::Node* root = build(tape, leaves);
    REQUIRE(root->val.size() == 1);
    tape.backward(root);

    auto eval = [&](size_t li, size_t k, double delta) {
        ad::Tape t2;
        std::vector<ad::Node*> ls;
        for (size_t m = 0; m < inputs.size(); ++m) {
            Tensor tv = inputs[m];
            if (m == li) tv.v[k] += delta;
            ls.push_back(t2.leaf(tv));
        }
        return build(t2, ls)->val.v[0];
    };

    const double h = 1e-6;
    double max_rel = 0.0;
    for (size_t li = 0; li < inputs.size(); ++li) {
        const Tensor g = tape.grad_of(leaves[li]);
        for (size_t k = 0; k < inputs[li].size(); ++k) {
            const double fd = (eval(li, k, h) - eval(li, k, -h)) / (2.0 * h);
            const double denom = std::max({std::abs(fd), std::abs(g.v[k]), 1e-4});
            max_rel = std::max(max_rel, std::abs(fd - g.v[k]) / denom);
        }
    }
    return max_rel;
}

}  // namespace

TEST_CASE("forward values: pointwise ops") {
    ad::Tape t;
    Tensor x(1, 1, 3);
    x.v = {0.0, 40.0, -40.0};
    ad::Node* sp = t.softplus(t.leaf(x));
    CHECK(sp->val.v[0] == doctest::Approx(std::log(2.0)));
    CHECK(sp->val.v[1] == doctest::Approx(40.0));       // stabilized, no overflow
    CHECK(sp->val.v[2] == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(sp->val.v[2] > 0.0);

    Tensor y(1, 1, 3);
    y.v = {-2.0, 0.5, 3.0};
    ad::Node* r = t.relu(t.leaf(y));
    CHECK(r->val.v == std::vector<double>{0.0, 0.5, 3.0});
    ad::Node* th = t.tanh(t.leaf(y));
    CHECK(th->val.v[2] == doctest::Approx(std::tanh(3.0)));
}

TEST_CASE("forward values: chan_affine and mul_scalar") {
    ad::Tape t;
    Tensor x(2, 1, 2);
    x.v = {1.0, 2.0, 3.0, 4.0};
    Tensor scl(2, 1, 1), shift(2, 1, 1);
    scl.v = {10.0, 100.0};
    shift.v = {0.5, -0.5};
    ad::Node* y = t.chan_affine(t.leaf(x), t.leaf(scl), t.leaf(shift));
    CHECK(y->val.v == std::vector<double>{10.5, 20.5, 299.5, 399.5});

    Tensor s(1, 1, 1);
    s.v = {-3.0};
    ad::Node* m = t.mul_scalar(t.leaf(x), t.leaf(s));
    CHECK(m->val.v == std::vector<double>{-3.0, -6.0, -9.0, -12.0});
}

TEST_CASE("forward values: conv2d identity kernel and replicate padding") {
    Rng rng(7);
    Tensor x = random_tensor(1, 3, 4, rng);

    ad::Tape t;
    Tensor k(1, 1, 9);  // cout=1, cin=1, 3x3, flat
    k.v.assign(9, 0.0);
    k.v[4] = 1.0;  // center tap
    Tensor b(1, 1, 1);
    b.v = {0.0};
    ad::Node* y = t.conv2d(t.leaf(x), t.leaf(k), t.leaf(b), 1, 1, 3, 3);
    for (size_t i = 0; i < x.size(); ++i) CHECK(y->val.v[i] == x.v[i]);

    // Single top-left tap: out(i,j) = in(i-1, j-1) with replicate clamping.
    Tensor k2(1, 1, 9);
    k2.v.assign(9, 0.0);
    k2.v[0] = 1.0;
    ad::Node* y2 = t.conv2d(t.leaf(x), t.leaf(k2), t.leaf(b), 1, 1, 3, 3);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j)
            CHECK(y2->val.at(0, i, j) == x.at(0, std::max(i - 1, 0), std::max(j - 1, 0)));

    // Bias shifts every output of its channel.
    Tensor b3(1, 1, 1);
    b3.v = {2.5};
    ad::Node* y3 = t.conv2d(t.leaf(x), t.leaf(k), t.leaf(b3), 1, 1, 3, 3);
    for (size_t i = 0; i < x.size(); ++i) CHECK(y3->val.v[i] == doctest::Approx(x.v[i] + 2.5));
}

TEST_CASE("forward values: stencil nodes match fdops bitwise") {
    Rng rng(11);
    GridSpec g(5, 6, 0.3);
    Field f(g);
    for (auto& v : f.values) v = rng.uniform(-2.0, 2.0);

    for (auto lb : {LineBoundary::one_sided2, LineBoundary::replicate}) {
        fdops::StencilScheme scheme{fdops::Interior::central2,
                                    lb == LineBoundary::one_sided2 ? fdops::Boundary::one_sided2
                                                                   : fdops::Boundary::replicate};
        auto [gx, gy] = fdops::gradient(f, scheme);
        Field lap = fdops::laplacian(f, scheme);

        ad::Tape t;
        ad::Node* x = t.leaf(tensor_from_field(f));
        CHECK(t.deriv_x(x, g.dx, lb)->val.v == gx.values);
        CHECK(t.deriv_y(x, g.dx, lb)->val.v == gy.values);
        CHECK(t.laplacian(x, g.dx, lb)->val.v == lap.values);
    }
}

TEST_CASE("concat and slice round trip") {
    Rng rng(3);
    Tensor a = random_tensor(2, 3, 3, rng), b = random_tensor(1, 3, 3, rng);
    ad::Tape t;
    ad::Node* cat = t.concat({t.leaf(a), t.leaf(b)});
    CHECK(cat->val.c == 3);
    CHECK(t.slice_channels(cat, 0, 2)->val.v == a.v);
    CHECK(t.slice_channels(cat, 2, 3)->val.v == b.v);
    CHECK_THROWS_AS(t.slice_channels(cat, 2, 5), ValidationError);
}

TEST_CASE("gradients: arithmetic and pointwise chain") {
    Rng rng(17);
    // Values away from 0 so abs and relu are differentiable at every sample.
    Tensor a = random_tensor(2, 3, 3, rng, 0.2, 1.0);
    Tensor b = random_tensor(2, 3, 3, rng, 0.2, 1.0);
    const double err = fd_check({a, b}, [](ad::Tape& t, const std::vector<ad::Node*>& l) {
        ad::Node* u = t.mul(t.add(l[0], l[1]), t.sub(l[0], t.scale(l[1], 0.7)));
        return t.mean_all(t.abs(t.add(u, t.scale(l[0], 0.31))));
    });
    CHECK(err <= 1e-5);
}

TEST_CASE("gradients: tanh, relu, softplus") {
    Rng rng(19);
    Tensor a = random_tensor(1, 4, 4, rng, 0.1, 2.0);
    const double err = fd_check({a}, [](ad::Tape& t, const std::vector<ad::Node*>& l) {
        return t.mean_all(t.add(t.tanh(l[0]), t.add(t.relu(l[0]), t.softplus(l[0]))));
    });
    CHECK(err <= 1e-5);
}

TEST_CASE("gradients: chan_affine and mul_scalar w.r.t. every operand") {
    Rng rng(23);
    Tensor x = random_tensor(2, 3, 3, rng);
    Tensor scl = random_tensor(2, 1, 1, rng, 0.5, 1.5);
    Tensor shift = random_tensor(2, 1, 1, rng);
    Tensor s = random_tensor(1, 1, 1, rng, 0.5, 1.5);
    const double err =
        fd_check({x, scl, shift, s}, [](ad::Tape& t, const std::vector<ad::Node*>& l) {
            ad::Node* y = t.chan_affine(l[0], l[1], l[2]);
            return t.mean_all(t.mul(t.mul_scalar(y, l[3]), y));
        });
    CHECK(err <= 1e-5);
}

TEST_CASE("gradients: conv2d w.r.t. input, kernel, and bias") {
    Rng rng(29);
    Tensor x = random_tensor(2, 5, 6, rng);
    Tensor k = random_tensor(1, 1, 3 * 2 * 3 * 3, rng, -0.4, 0.4);
    Tensor b = random_tensor(1, 1, 3, rng, -0.1, 0.1);
    const double err = fd_check({x, k, b}, [](ad::Tape& t, const std::vector<ad::Node*>& l) {
        return t.mean_all(t.tanh(t.conv2d(l[0], l[1], l[2], 3, 2, 3, 3)));
    });
    CHECK(err <= 1e-5);
}

TEST_CASE("gradients: stencil nodes, both boundary modes") {
    Rng rng(31);
    Tensor x = random_tensor(2, 5, 5, rng);
    for (auto lb : {LineBoundary::one_sided2, LineBoundary::replicate}) {
        const double err = fd_check({x}, [lb](ad::Tape& t, const std::vector<ad::Node*>& l) {
            ad::Node* dxn = t.deriv_x(l[0], 0.25, lb);
            ad::Node* dyn = t.deriv_y(l[0], 0.25, lb);
            ad::Node* lap = t.laplacian(l[0], 0.25, lb);
            return t.mean_all(t.add(t.mul(dxn, dxn), t.add(t.mul(dyn, dyn), t.mul(lap, lap))));
        });
        CHECK(err <= 1e-5);
    }
}

TEST_CASE("gradients: slice/concat routing") {
    Rng rng(37);
    Tensor a = random_tensor(2, 3, 3, rng), b = random_tensor(2, 3, 3, rng);
    const double err = fd_check({a, b}, [](ad::Tape& t, const std::vector<ad::Node*>& l) {
        ad::Node* cat = t.concat({l[0], l[1]});
        ad::Node* mid = t.slice_channels(cat, 1, 3);  // crosses the seam
        return t.sum_all(t.mul(mid, mid));
    });
    CHECK(err <= 1e-5);
}

TEST_CASE("gradients: composite conv stack with residual") {
    Rng rng(41);
    Tensor x = random_tensor(2, 5, 5, rng);
    Tensor k1(1, 1, 4 * 2 * 9), k2(1, 1, 2 * 4 * 9);
    for (auto& v : k1.v) v = rng.uniform(-0.3, 0.3);
    for (auto& v : k2.v) v = rng.uniform(-0.3, 0.3);
    Tensor b1(1, 1, 4, 0.01), b2(1, 1, 2, -0.02);
    const double err =
        fd_check({x, k1, k2, b1, b2}, [](ad::Tape& t, const std::vector<ad::Node*>& l) {
            ad::Node* h1 = t.tanh(t.conv2d(l[0], l[1], l[3], 4, 2, 3, 3));
            ad::Node* h2 = t.conv2d(h1, l[2], l[4], 2, 4, 3, 3);
            return t.mean_all(t.abs(t.add(l[0], h2)));
        });
    CHECK(err <= 1e-5);
}

TEST_CASE("backward is repeatable and zeroes stale gradients") {
    Rng rng(43);
    Tensor a = random_tensor(1, 3, 3, rng);
    ad::Tape t;
    ad::Node* l = t.leaf(a, true);
    ad::Node* unused = t.leaf(a, true);
    ad::Node* root = t.mean_all(t.mul(l, l));
    t.backward(root);
    const Tensor g1 = t.grad_of(l);
    t.backward(root);
    const Tensor g2 = t.grad_of(l);
    CHECK(g1.v == g2.v);  // bitwise: fixed sweep order, accumulators re-zeroed

    const Tensor gu = t.grad_of(unused);
    for (double v : gu.v) CHECK(v == 0.0);
}

TEST_CASE("shape mismatches are rejected") {
    ad::Tape t;
    ad::Node* a = t.leaf(Tensor(1, 2, 2));
    ad::Node* b = t.leaf(Tensor(1, 3, 2));
    CHECK_THROWS_AS(t.add(a, b), ValidationError);
    CHECK_THROWS_AS(t.mul_scalar(a, b), ValidationError);
    CHECK_THROWS_AS(t.conv2d(a, t.leaf(Tensor(1, 1, 9)), t.leaf(Tensor(1, 1, 1)), 1, 2, 3, 3),
                    ValidationError);
}
