#pragma once

// 1D stencil kernels shared by the fdops operators and the autodiff stencil
// nodes, so both paths produce bitwise-identical values. A "line" is n
// samples at a fixed stride through a row-major array.

namespace parc::detail {

enum class LineBoundary { one_sided2, replicate };

// First derivative: central in the interior; edges either second-order
// one-sided or a copy of the adjacent interior derivative (replicate).
inline void deriv_line(const double* f, double* g, int n, int stride, double dx,
                       LineBoundary b) {
    const double inv2 = 1.0 / (2.0 * dx);
    for (int j = 1; j < n - 1; ++j)
        g[j * stride] = (f[(j + 1) * stride] - f[(j - 1) * stride]) * inv2;
    if (b == LineBoundary::one_sided2) {
        g[0] = (-3.0 * f[0] + 4.0 * f[stride] - f[2 * stride]) * inv2;
        g[(n - 1) * stride] =
            (3.0 * f[(n - 1) * stride] - 4.0 * f[(n - 2) * stride] + f[(n - 3) * stride]) * inv2;
    } else {
        g[0] = g[stride];
        g[(n - 1) * stride] = g[(n - 2) * stride];
    }
}

// Adds the adjoint of deriv_line: gin += A^T gout for the matrix A above.
inline void deriv_line_adjoint(const double* gout, double* gin, int n, int stride, double dx,
                               LineBoundary b) {
    const double inv2 = 1.0 / (2.0 * dx);
    for (int j = 1; j < n - 1; ++j) {
        double g = gout[j * stride];
        gin[(j - 1) * stride] -= g * inv2;
        gin[(j + 1) * stride] += g * inv2;
    }
    if (b == LineBoundary::one_sided2) {
        double g0 = gout[0];
        gin[0] += -3.0 * inv2 * g0;
        gin[stride] += 4.0 * inv2 * g0;
        gin[2 * stride] += -inv2 * g0;
        double g1 = gout[(n - 1) * stride];
        gin[(n - 1) * stride] += 3.0 * inv2 * g1;
        gin[(n - 2) * stride] += -4.0 * inv2 * g1;
        gin[(n - 3) * stride] += inv2 * g1;
    } else {
        // Edge outputs replicate the adjacent interior rows (j=1 and j=n-2).
        double g0 = gout[0];
        gin[0] -= g0 * inv2;
        gin[2 * stride] += g0 * inv2;
        double g1 = gout[(n - 1) * stride];
        gin[(n - 1) * stride] += g1 * inv2;
        gin[(n - 3) * stride] -= g1 * inv2;
    }
}

// Accumulates the 1D second-derivative contribution along a line.
inline void second_line(const double* f, double* g, int n, int stride, double dx,
                        LineBoundary b) {
    const double inv = 1.0 / (dx * dx);
    for (int j = 1; j < n - 1; ++j)
        g[j * stride] += (f[(j - 1) * stride] - 2.0 * f[j * stride] + f[(j + 1) * stride]) * inv;
    if (b == LineBoundary::one_sided2) {
        g[0] += (2.0 * f[0] - 5.0 * f[stride] + 4.0 * f[2 * stride] - f[3 * stride]) * inv;
        g[(n - 1) * stride] += (2.0 * f[(n - 1) * stride] - 5.0 * f[(n - 2) * stride] +
                                4.0 * f[(n - 3) * stride] - f[(n - 4) * stride]) *
                               inv;
    } else {
        // Replicate padding collapses the edge stencil to a first difference.
        g[0] += (f[stride] - f[0]) * inv;
        g[(n - 1) * stride] += (f[(n - 2) * stride] - f[(n - 1) * stride]) * inv;
    }
}

inline void second_line_adjoint(const double* gout, double* gin, int n, int stride, double dx,
                                LineBoundary b) {
    const double inv = 1.0 / (dx * dx);
    for (int j = 1; j < n - 1; ++j) {
        double g = gout[j * stride] * inv;
        gin[(j - 1) * stride] += g;
        gin[j * stride] -= 2.0 * g;
        gin[(j + 1) * stride] += g;
    }
    if (b == LineBoundary::one_sided2) {
        double g0 = gout[0] * inv;
        gin[0] += 2.0 * g0;
        gin[stride] += -5.0 * g0;
        gin[2 * stride] += 4.0 * g0;
        gin[3 * stride] += -g0;
        double g1 = gout[(n - 1) * stride] * inv;
        gin[(n - 1) * stride] += 2.0 * g1;
        gin[(n - 2) * stride] += -5.0 * g1;
        gin[(n - 3) * stride] += 4.0 * g1;
        gin[(n - 4) * stride] += -g1;
    } else {
        double g0 = gout[0] * inv;
        gin[stride] += g0;
        gin[0] -= g0;
        double g1 = gout[(n - 1) * stride] * inv;
        gin[(n - 2) * stride] += g1;
        gin[(n - 1) * stride] -= g1;
    }
}

}  // namespace parc::detail
