#include "parc/fdops.hpp"

#include <cmath>

#include "parc/detail/stencil_lines.hpp"

namespace parc::fdops {

namespace {

using detail::deriv_line;
using detail::second_line;

detail::LineBoundary line_boundary(Boundary b) {
    return b == Boundary::one_sided2 ? detail::LineBoundary::one_sided2
                                     : detail::LineBoundary::replicate;
}

void require_layout(const Field& a, const Field& b, const char* op) {
    if (!a.grid.same_layout(b.grid)) throw ValidationError(std::string(op) + ": grid mismatch");
}

// Masked variants. A direction is readable when the neighbor exists and is
// not blocked; blocked cells output zero.
struct MaskedLine {
    const double* f;
    const double* m;  // 1 = blocked
    int n, stride;

    bool open(int j) const { return j >= 0 && j < n && m[j * stride] == 0.0; }
    double v(int j) const { return f[j * stride]; }
};

double masked_deriv_at(const MaskedLine& L, int j, double dx) {
    if (!L.open(j)) return 0.0;
    bool left = L.open(j - 1), right = L.open(j + 1);
    if (left && right) return (L.v(j + 1) - L.v(j - 1)) / (2.0 * dx);
    if (right)
        return L.open(j + 2)
                   ? (-3.0 * L.v(j) + 4.0 * L.v(j + 1) - L.v(j + 2)) / (2.0 * dx)
                   : (L.v(j + 1) - L.v(j)) / dx;
    if (left)
        return L.open(j - 2)
                   ? (3.0 * L.v(j) - 4.0 * L.v(j - 1) + L.v(j - 2)) / (2.0 * dx)
                   : (L.v(j) - L.v(j - 1)) / dx;
    return 0.0;
}

double masked_second_at(const MaskedLine& L, int j, double dx) {
    if (!L.open(j)) return 0.0;
    const double inv = 1.0 / (dx * dx);
    bool left = L.open(j - 1), right = L.open(j + 1);
    if (left && right) return (L.v(j - 1) - 2.0 * L.v(j) + L.v(j + 1)) * inv;
    if (right) {
        if (L.open(j + 2) && L.open(j + 3))
            return (2.0 * L.v(j) - 5.0 * L.v(j + 1) + 4.0 * L.v(j + 2) - L.v(j + 3)) * inv;
        if (L.open(j + 2)) return (L.v(j) - 2.0 * L.v(j + 1) + L.v(j + 2)) * inv;
        return (L.v(j + 1) - L.v(j)) * inv;
    }
    if (left) {
        if (L.open(j - 2) && L.open(j - 3))
            return (2.0 * L.v(j) - 5.0 * L.v(j - 1) + 4.0 * L.v(j - 2) - L.v(j - 3)) * inv;
        if (L.open(j - 2)) return (L.v(j) - 2.0 * L.v(j - 1) + L.v(j - 2)) * inv;
        return (L.v(j - 1) - L.v(j)) * inv;
    }
    return 0.0;
}

void check_mask(const Field& f, const Field* mask, const char* op) {
    if (!mask) return;
    require_layout(f, *mask, op);
    for (double m : mask->values)
        if (m != 0.0 && m != 1.0)
            throw ValidationError(std::string(op) + ": mask must be binary");
}

}  // namespace

std::pair<Field, Field> gradient(const Field& f, StencilScheme scheme, const Field* mask) {
    f.grid.validate();
    check_mask(f, mask, "gradient");
    const int h = f.height(), w = f.width();
    const double dx = f.dx();
    Field gx(f.grid), gy(f.grid);

    if (!mask) {
        for (int i = 0; i < h; ++i)
            deriv_line(f.values.data() + static_cast<size_t>(i) * w,
                       gx.values.data() + static_cast<size_t>(i) * w, w, 1, dx,
                       line_boundary(scheme.boundary));
        for (int j = 0; j < w; ++j)
            deriv_line(f.values.data() + j, gy.values.data() + j, h, w, dx,
                       line_boundary(scheme.boundary));
    } else {
        for (int i = 0; i < h; ++i) {
            MaskedLine L{f.values.data() + static_cast<size_t>(i) * w,
                         mask->values.data() + static_cast<size_t>(i) * w, w, 1};
            for (int j = 0; j < w; ++j) gx.at(i, j) = masked_deriv_at(L, j, dx);
        }
        for (int j = 0; j < w; ++j) {
            MaskedLine L{f.values.data() + j, mask->values.data() + j, h, w};
            for (int i = 0; i < h; ++i) gy.at(i, j) = masked_deriv_at(L, i, dx);
        }
    }
    gx.check_finite("gradient");
    gy.check_finite("gradient");
    return {std::move(gx), std::move(gy)};
}

Field laplacian(const Field& f, StencilScheme scheme, const Field* mask) {
    f.grid.validate();
    check_mask(f, mask, "laplacian");
    const int h = f.height(), w = f.width();
    const double dx = f.dx();
    Field out(f.grid);

    if (!mask) {
        for (int i = 0; i < h; ++i)
            second_line(f.values.data() + static_cast<size_t>(i) * w,
                        out.values.data() + static_cast<size_t>(i) * w, w, 1, dx,
                        line_boundary(scheme.boundary));
        for (int j = 0; j < w; ++j)
            second_line(f.values.data() + j, out.values.data() + j, h, w, dx,
                        line_boundary(scheme.boundary));
    } else {
        for (int i = 0; i < h; ++i) {
            MaskedLine L{f.values.data() + static_cast<size_t>(i) * w,
                         mask->values.data() + static_cast<size_t>(i) * w, w, 1};
            for (int j = 0; j < w; ++j) out.at(i, j) = masked_second_at(L, j, dx);
        }
        for (int j = 0; j < w; ++j) {
            MaskedLine L{f.values.data() + j, mask->values.data() + j, h, w};
            for (int i = 0; i < h; ++i) out.at(i, j) += masked_second_at(L, i, dx);
        }
    }
    out.check_finite("laplacian");
    return out;
}

Field advect(const Field& ux, const Field& uy, const Field& f, StencilScheme scheme,
             const Field* mask) {
    require_layout(ux, f, "advect");
    require_layout(uy, f, "advect");
    auto [gx, gy] = gradient(f, scheme, mask);
    Field out(f.grid);
    for (size_t n = 0; n < out.values.size(); ++n)
        out.values[n] = ux.values[n] * gx.values[n] + uy.values[n] * gy.values[n];
    out.check_finite("advect");
    return out;
}

Field divergence(const Field& ux, const Field& uy, StencilScheme scheme, const Field* mask) {
    require_layout(ux, uy, "divergence");
    Field dx_part = gradient(ux, scheme, mask).first;
    Field dy_part = gradient(uy, scheme, mask).second;
    return add(dx_part, dy_part);
}

}  // namespace parc::fdops
