#pragma once

#include <string>
#include <utility>
#include <vector>

#include "parc/fields.hpp"
#include "parc/training.hpp"

namespace parc::render {

// Field raster under the viridis colormap (9 anchor colors, linearly
// interpolated), mapping [lo, hi] to the color range. lo == hi auto-scales
// to the field's own extrema.
void write_field_png(const Field& f, const std::string& path, double lo = 0.0, double hi = 0.0);

// Train/validation loss curves as a standalone SVG. Uses a log10 y-axis when
// the values span more than a decade (losses usually do).
void write_loss_svg(const std::vector<training::EpochRow>& curve, const std::string& path);

// Generic xy polyline (e.g. RMSE versus R for the sweep report).
void write_xy_svg(const std::vector<std::pair<double, double>>& pts, const std::string& x_label,
                  const std::string& y_label, const std::string& path);

}  // namespace parc::render
