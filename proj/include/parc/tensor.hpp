#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "parc/errors.hpp"
#include "parc/fields.hpp"

namespace parc {

// Dense C x H x W tensor of doubles, row-major within each channel. This is
// the value type flowing through the autodiff graph; Fields convert in and
// out at the model boundary.
struct Tensor {
    int c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int c_, int h_, int w_, double fill = 0.0)
        : c(c_), h(h_), w(w_), v(static_cast<size_t>(c_) * h_ * w_, fill) {
        if (c_ < 0 || h_ < 0 || w_ < 0) throw ValidationError("Tensor: negative dimension");
    }

    size_t size() const { return v.size(); }
    int plane() const { return h * w; }

    double& at(int ci, int i, int j) {
        return v[(static_cast<size_t>(ci) * h + i) * w + j];
    }
    double at(int ci, int i, int j) const {
        return v[(static_cast<size_t>(ci) * h + i) * w + j];
    }
    double* channel(int ci) { return v.data() + static_cast<size_t>(ci) * plane(); }
    const double* channel(int ci) const { return v.data() + static_cast<size_t>(ci) * plane(); }

    bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }

    void check_finite(const char* what) const {
        for (double x : v)
            if (!std::isfinite(x)) throw NumericsError(std::string(what) + ": non-finite tensor");
    }
};

inline Tensor tensor_from_field(const Field& f) {
    Tensor t(1, f.height(), f.width());
    t.v = f.values;
    return t;
}

inline Field field_from_channel(const Tensor& t, int ci, const GridSpec& grid,
                                std::string units = "") {
    if (grid.cells() != t.plane()) throw ValidationError("field_from_channel: shape mismatch");
    std::vector<double> vals(t.channel(ci), t.channel(ci) + t.plane());
    return Field(grid, std::move(vals), std::move(units));
}

}  // namespace parc
