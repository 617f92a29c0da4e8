#include "parc/fields.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

namespace parc {

GridSpec::GridSpec(int h, int w, double dx_, std::array<double, 2> origin_, std::string units_)
    : height(h), width(w), dx(dx_), origin(origin_), units(std::move(units_)) {
    validate();
}

bool GridSpec::same_layout(const GridSpec& o) const {
    return height == o.height && width == o.width && dx == o.dx && origin == o.origin;
}

void GridSpec::validate() const {
    if (height < 4 || width < 4)
        throw ValidationError("GridSpec: height and width must be >= 4, got " +
                              std::to_string(height) + "x" + std::to_string(width));
    if (!(dx > 0.0) || !std::isfinite(dx))
        throw ValidationError("GridSpec: dx must be positive and finite");
    if (!std::isfinite(origin[0]) || !std::isfinite(origin[1]))
        throw ValidationError("GridSpec: origin must be finite");
}

GridSpec centered_grid(int height, int width, double dx, std::string units) {
    // Cell centers run from -(n-1)/2*dx to +(n-1)/2*dx in each axis.
    std::array<double, 2> origin{-0.5 * (width - 1) * dx, -0.5 * (height - 1) * dx};
    return GridSpec(height, width, dx, origin, std::move(units));
}

Field::Field(const GridSpec& g, double fill) : grid(g), values(g.cells(), fill) {
    grid.validate();
    if (!std::isfinite(fill)) throw NumericsError("Field: non-finite fill value");
}

Field::Field(const GridSpec& g, std::vector<double> vals, std::string units_)
    : grid(g), values(std::move(vals)), units(std::move(units_)) {
    grid.validate();
    if (values.size() != static_cast<size_t>(grid.cells()))
        throw ValidationError("Field: value count " + std::to_string(values.size()) +
                              " does not match grid " + std::to_string(grid.height) + "x" +
                              std::to_string(grid.width));
    check_finite("Field construction");
}

void Field::check_finite(const char* what) const {
    for (size_t n = 0; n < values.size(); ++n) {
        if (!std::isfinite(values[n])) {
            int i = static_cast<int>(n) / grid.width;
            int j = static_cast<int>(n) % grid.width;
            throw NumericsError(std::string(what) + ": non-finite value at cell (" +
                                std::to_string(i) + "," + std::to_string(j) + ")");
        }
    }
}

namespace {

void require_same_layout(const Field& a, const Field& b, const char* op) {
    if (!a.grid.same_layout(b.grid))
        throw ValidationError(std::string(op) + ": grid mismatch (" + std::to_string(a.height()) +
                              "x" + std::to_string(a.width()) + " vs " + std::to_string(b.height()) +
                              "x" + std::to_string(b.width()) + ")");
}

template <class F>
Field binary(const Field& a, const Field& b, const char* op, F f) {
    require_same_layout(a, b, op);
    Field out(a.grid);
    out.units = a.units;
    for (size_t n = 0; n < a.values.size(); ++n) out.values[n] = f(a.values[n], b.values[n]);
    out.check_finite(op);
    return out;
}

}  // namespace

Field add(const Field& a, const Field& b) {
    return binary(a, b, "add", [](double x, double y) { return x + y; });
}

Field add(const Field& a, double c) {
    Field out(a.grid);
    out.units = a.units;
    for (size_t n = 0; n < a.values.size(); ++n) out.values[n] = a.values[n] + c;
    out.check_finite("add");
    return out;
}

Field sub(const Field& a, const Field& b) {
    return binary(a, b, "sub", [](double x, double y) { return x - y; });
}

Field mul(const Field& a, const Field& b) {
    return binary(a, b, "mul", [](double x, double y) { return x * y; });
}

Field scale(const Field& a, double c) {
    Field out(a.grid);
    out.units = a.units;
    for (size_t n = 0; n < a.values.size(); ++n) out.values[n] = a.values[n] * c;
    out.check_finite("scale");
    return out;
}

Field abs(const Field& a) {
    Field out(a.grid);
    out.units = a.units;
    for (size_t n = 0; n < a.values.size(); ++n) out.values[n] = std::fabs(a.values[n]);
    return out;
}

double reduce(const Field& a, Reduce op) {
    switch (op) {
        case Reduce::sum: {
            double s = 0.0;
            for (double v : a.values) s += v;
            return s;
        }
        case Reduce::mean:
            return reduce(a, Reduce::sum) / static_cast<double>(a.values.size());
        case Reduce::min:
            return *std::min_element(a.values.begin(), a.values.end());
        case Reduce::max:
            return *std::max_element(a.values.begin(), a.values.end());
    }
    throw ValidationError("reduce: unknown op");
}

Field masked_fill(const Field& a, const Field& mask, double value) {
    require_same_layout(a, mask, "masked_fill");
    if (!std::isfinite(value)) throw NumericsError("masked_fill: non-finite fill value");
    Field out = a;
    for (size_t n = 0; n < a.values.size(); ++n) {
        double m = mask.values[n];
        if (m != 0.0 && m != 1.0)
            throw ValidationError("masked_fill: mask must be binary, found " + std::to_string(m));
        if (m == 1.0) out.values[n] = value;
    }
    return out;
}

namespace {

void check_channel_index(int c, int n) {
    if (c < 0 || c >= n)
        throw ValidationError("Snapshot: channel index " + std::to_string(c) +
                              " out of range [0, " + std::to_string(n) + ")");
}

}  // namespace

const Field& Snapshot::channel(int c) const {
    check_channel_index(c, n_channels());
    if (c == 0) return ux;
    if (c == 1) return uy;
    return state[static_cast<size_t>(c) - 2];
}

Field& Snapshot::channel(int c) {
    check_channel_index(c, n_channels());
    if (c == 0) return ux;
    if (c == 1) return uy;
    return state[static_cast<size_t>(c) - 2];
}

std::string Snapshot::channel_name(int c) const {
    check_channel_index(c, n_channels());
    if (c == 0) return "u_x";
    if (c == 1) return "u_y";
    return state_names[static_cast<size_t>(c) - 2];
}

std::vector<std::string> Snapshot::channel_names() const {
    std::vector<std::string> names;
    names.reserve(static_cast<size_t>(n_channels()));
    for (int c = 0; c < n_channels(); ++c) names.push_back(channel_name(c));
    return names;
}

int Snapshot::state_index(const std::string& name) const {
    for (size_t k = 0; k < state_names.size(); ++k)
        if (state_names[k] == name) return static_cast<int>(k);
    return -1;
}

void Snapshot::validate() const {
    if (!std::isfinite(t)) throw NumericsError("Snapshot: non-finite time");
    ux.grid.validate();
    if (!ux.grid.same_layout(uy.grid)) throw ValidationError("Snapshot: velocity grids differ");
    if (state.size() != state_names.size())
        throw ValidationError("Snapshot: state channel/name count mismatch");
    for (const Field& f : state)
        if (!f.grid.same_layout(ux.grid)) throw ValidationError("Snapshot: state grid differs");
}

void Trajectory::validate() const {
    if (snaps.empty()) throw ValidationError("Trajectory: no snapshots");
    if (!std::isfinite(dt) || (snaps.size() > 1 && !(dt > 0.0)))
        throw ValidationError("Trajectory: bad dt");
    const Snapshot& first = snaps.front();
    first.validate();
    for (size_t k = 0; k < snaps.size(); ++k) {
        const Snapshot& s = snaps[k];
        s.validate();
        if (!s.grid().same_layout(first.grid()))
            throw ValidationError("Trajectory: grid changes at snapshot " + std::to_string(k));
        if (s.state_names != first.state_names)
            throw ValidationError("Trajectory: channel layout changes at snapshot " +
                                  std::to_string(k));
        double expect = first.t + static_cast<double>(k) * dt;
        double tol = 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::fabs(expect));
        if (std::fabs(s.t - expect) > tol)
            throw ValidationError("Trajectory: snapshot " + std::to_string(k) +
                                  " time is not t0 + k*dt");
    }
}

}  // namespace parc
