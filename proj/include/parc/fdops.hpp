#pragma once

#include <utility>

#include "parc/fields.hpp"

namespace parc::fdops {

// Interior points always use second-order central differences (the only
// interior scheme supported). The boundary enum selects edge handling:
//   one_sided2 - second-order one-sided formulas, e.g. (-3f0+4f1-f2)/(2dx);
//                used for metric evaluations so residuals reach the edge.
//   replicate  - gradient edges copy the adjacent interior derivative;
//                laplacian edges see replicate-padded input; used inside the
//                differentiator so stencils and conv layers share padding.
enum class Interior { central2 };
enum class Boundary { one_sided2, replicate };

struct StencilScheme {
    Interior interior = Interior::central2;
    Boundary boundary = Boundary::one_sided2;
};

inline constexpr StencilScheme kMetricScheme{Interior::central2, Boundary::one_sided2};
inline constexpr StencilScheme kModelScheme{Interior::central2, Boundary::replicate};

// All operators accept an optional obstacle mask (1 = blocked cell). Stencils
// never read across blocked cells: a free cell next to one falls back to a
// one-sided difference pointing away from the obstacle (second order when two
// more free cells are available, first order otherwise), and outputs at
// blocked cells are zero. With a mask present, grid edges are treated the
// same way as blocked neighbors; the boundary enum governs the unmasked path.

// Returns (df/dx, df/dy).
std::pair<Field, Field> gradient(const Field& f, StencilScheme scheme = {},
                                 const Field* mask = nullptr);

Field laplacian(const Field& f, StencilScheme scheme = {}, const Field* mask = nullptr);

// u . grad(f) = ux*df/dx + uy*df/dy.
Field advect(const Field& ux, const Field& uy, const Field& f, StencilScheme scheme = {},
             const Field* mask = nullptr);

// dux/dx + duy/dy.
Field divergence(const Field& ux, const Field& uy, StencilScheme scheme = {},
                 const Field* mask = nullptr);

}  // namespace parc::fdops
