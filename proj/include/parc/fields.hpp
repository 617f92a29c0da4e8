#pragma once

#include <array>
#include <string>
#include <vector>

#include "parc/errors.hpp"

namespace parc {

// Uniform 2D cell-centered grid. Row index i runs along y (downward), column
// index j along x (rightward); storage everywhere is row-major. The same dx
// applies to both axes. `origin` is the physical coordinate of the center of
// cell (0,0), so cell (i,j) sits at (origin.x + j*dx, origin.y + i*dx).
struct GridSpec {
    int height = 0;
    int width = 0;
    double dx = 1.0;
    std::array<double, 2> origin{0.0, 0.0};  // {x, y} of cell (0,0) center
    std::string units;                       // label only, never converted

    GridSpec() = default;
    GridSpec(int h, int w, double dx_, std::array<double, 2> origin_ = {0.0, 0.0},
             std::string units_ = "");

    int cells() const { return height * width; }
    double x(int j) const { return origin[0] + j * dx; }
    double y(int i) const { return origin[1] + i * dx; }
    double extent_x() const { return width * dx; }
    double extent_y() const { return height * dx; }

    // Same dimensions, spacing, and origin; units labels are not compared.
    bool same_layout(const GridSpec& o) const;
    void validate() const;
};

// Grid whose cell centers are symmetric about (0,0), matching the Burgers
// setup where the initial Gaussian sits at the domain center.
GridSpec centered_grid(int height, int width, double dx, std::string units = "");

// A single scalar field on a grid. Values are finite after every public
// operation; anything producing NaN/Inf throws instead of propagating it.
struct Field {
    GridSpec grid;
    std::vector<double> values;  // row-major, height*width
    std::string units;

    Field() = default;
    explicit Field(const GridSpec& g, double fill = 0.0);
    Field(const GridSpec& g, std::vector<double> vals, std::string units_ = "");

    double& at(int i, int j) { return values[static_cast<size_t>(i) * grid.width + j]; }
    double at(int i, int j) const { return values[static_cast<size_t>(i) * grid.width + j]; }
    int height() const { return grid.height; }
    int width() const { return grid.width; }
    double dx() const { return grid.dx; }

    void check_finite(const char* what) const;  // throws NumericsError
};

// Pointwise arithmetic. Binary ops require layout-compatible grids.
Field add(const Field& a, const Field& b);
Field add(const Field& a, double c);
Field sub(const Field& a, const Field& b);
Field mul(const Field& a, const Field& b);
Field scale(const Field& a, double c);
Field abs(const Field& a);

enum class Reduce { sum, mean, min, max };
double reduce(const Field& a, Reduce op);

// Replaces cells where mask==1 with `value`; mask cells must be exactly 0 or 1.
Field masked_fill(const Field& a, const Field& mask, double value);

// One time level: two velocity components plus named extra state channels
// (empty for Burgers; [T, P, mu] for the energetic-materials layout).
struct Snapshot {
    double t = 0.0;
    Field ux, uy;
    std::vector<Field> state;
    std::vector<std::string> state_names;

    int n_channels() const { return 2 + static_cast<int>(state.size()); }
    const Field& channel(int c) const;
    Field& channel(int c);
    std::string channel_name(int c) const;
    std::vector<std::string> channel_names() const;
    int state_index(const std::string& name) const;  // -1 when absent
    const GridSpec& grid() const { return ux.grid; }

    void validate() const;  // shared grid across all channels, names sized
};

// Uniformly spaced sequence of snapshots.
struct Trajectory {
    std::vector<Snapshot> snaps;
    double dt = 0.0;

    int size() const { return static_cast<int>(snaps.size()); }
    double t0() const { return snaps.front().t; }

    void validate() const;  // >=1 snapshot, times t0+k*dt, consistent layout
};

}  // namespace parc
