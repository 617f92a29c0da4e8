#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "parc/fields.hpp"

namespace parc::metrics {

// Solution-quality suite: prediction RMSEs, PDE momentum residuals,
// divergence error, and hotspot statistics with their RMSE-style errors.

double rmse(const Field& pred, const Field& truth);
Field speed(const Snapshot& s);  // sqrt(ux^2 + uy^2)
double rmse_speed(const Snapshot& pred, const Snapshot& truth);

struct ResidualOptions {
    // Drop the outermost cell ring so one-sided boundary stencils do not
    // dominate the average; obstacle cells (mask == 1) are always dropped.
    bool exclude_boundary_ring = true;
    const Field* mask = nullptr;
};

// Mean over snapshots and cells of sqrt(fx^2 + fy^2) with
//   f = du/dt + (u.grad)u - (1/R) lap u.
// Time derivative: centered over dt, one-sided at the first/last snapshot.
double burgers_residual(const Trajectory& tr, double R, const ResidualOptions& opt = {});

// Navier-Stokes momentum residual f = du/dt + (u.grad)u + (1/rho) grad p
// - (1/Re) lap u; requires a pressure state channel.
double ns_residual(const Trajectory& tr, double rho, double Re, const ResidualOptions& opt = {},
                   const std::string& pressure_channel = "p");

// Mean signed divergence (the literal formula) plus the mean absolute value,
// which cannot cancel on oscillatory fields. Evaluated over every cell; the
// obstacle mask, when given, excludes blocked cells and switches the stencils
// to their mask-aware form.
struct DivergenceError {
    double signed_mean = 0.0;
    double abs_mean = 0.0;
};
DivergenceError divergence_error(const Snapshot& s, const Field* mask = nullptr);

// Threshold statistics of a temperature channel. Rates are backward
// differences, so they start at the second snapshot (length size()-1).
struct HotspotSeries {
    std::vector<double> t;
    std::vector<double> temp;       // mean of cells >= threshold; 0 when none
    std::vector<double> area;       // count * cell_area
    std::vector<bool> empty;        // true where no cell crossed the threshold
    std::vector<double> temp_rate;  // (temp_k - temp_{k-1}) / dt
    std::vector<double> area_rate;

    int size() const { return static_cast<int>(t.size()); }
};
HotspotSeries hotspot_series(const Trajectory& tr, const std::string& channel = "T",
                             double threshold = 875.0, double cell_area = 0.0 /* 0: dx^2 */);

struct HotspotErrors {
    double temp = 0.0, area = 0.0, temp_rate = 0.0, area_rate = 0.0;
};
HotspotErrors hotspot_errors(const HotspotSeries& pred, const HotspotSeries& truth);

// Everything the eval command reports for one predicted trajectory against
// its reference. Residual-style metrics are computed for both so reports can
// show the discretization floor next to the model's value.
struct EvalOptions {
    std::optional<double> R;                  // enables the Burgers residual
    std::optional<double> rho;                // with Re, enables the NS residual
    std::optional<double> Re;
    std::string pressure_channel = "p";
    std::string temperature_channel = "T";   // hotspot metrics when present
    double hotspot_threshold = 875.0;
    double cell_area = 0.0;
    ResidualOptions residual;
};

struct MetricsRecord {
    double rmse_u = 0.0;                      // pooled over snapshots and cells
    std::map<std::string, double> rmse_state;
    std::optional<double> resid_pred, resid_truth;
    DivergenceError div_pred, div_truth;      // averaged over snapshots
    std::optional<HotspotErrors> hotspot;
};

MetricsRecord evaluate_pair(const Trajectory& pred, const Trajectory& truth,
                            const EvalOptions& opt = {});

}  // namespace parc::metrics
