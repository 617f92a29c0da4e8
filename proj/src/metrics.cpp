#include "parc/metrics.hpp"

#include <cmath>

#include "parc/fdops.hpp"

namespace parc::metrics {

namespace {

void require_layout(const GridSpec& a, const GridSpec& b, const char* what) {
    if (!a.same_layout(b)) throw ValidationError(std::string(what) + ": grid layout mismatch");
}

// Time derivative of one channel across the trajectory at snapshot k:
// centered in the interior, second-order one-sided at the ends.
Field time_deriv(const Trajectory& tr, int channel, int k) {
    const double dt = tr.dt;
    const int T = tr.size();
    auto ch = [&](int i) -> const Field& { return tr.snaps[static_cast<size_t>(i)].channel(channel); };
    if (k > 0 && k + 1 < T)
        return scale(sub(ch(k + 1), ch(k - 1)), 1.0 / (2.0 * dt));
    if (k == 0)
        return scale(add(scale(ch(0), -3.0), sub(scale(ch(1), 4.0), ch(2))), 1.0 / (2.0 * dt));
    return scale(add(scale(ch(T - 1), 3.0), sub(ch(T - 3), scale(ch(T - 2), 4.0))),
                 1.0 / (2.0 * dt));
}

bool cell_included(int i, int j, int h, int w, const ResidualOptions& opt) {
    if (opt.exclude_boundary_ring && (i == 0 || j == 0 || i == h - 1 || j == w - 1)) return false;
    if (opt.mask && opt.mask->at(i, j) != 0.0) return false;
    return true;
}

// Mean cellwise magnitude of the momentum residual over the whole trajectory:
// du/dt + (u.grad)u - inv_visc*lap(u), plus inv_rho*grad(p) when a pressure
// channel name is supplied.
double momentum_residual(const Trajectory& tr, const ResidualOptions& opt, double inv_visc,
                         const std::string* pressure_channel, double inv_rho, const char* what) {
    tr.validate();
    if (tr.size() < 3)
        throw ValidationError(std::string(what) + ": needs at least 3 snapshots for the time stencil");
    const GridSpec& grid = tr.snaps.front().grid();
    if (opt.mask) require_layout(opt.mask->grid, grid, what);

    double acc = 0.0;
    size_t n = 0;
    for (int k = 0; k < tr.size(); ++k) {
        const Snapshot& s = tr.snaps[static_cast<size_t>(k)];
        Field fx = time_deriv(tr, 0, k);
        Field fy = time_deriv(tr, 1, k);
        fx = add(fx, fdops::advect(s.ux, s.uy, s.ux, fdops::kMetricScheme, opt.mask));
        fy = add(fy, fdops::advect(s.ux, s.uy, s.uy, fdops::kMetricScheme, opt.mask));
        if (inv_visc != 0.0) {
            fx = sub(fx, scale(fdops::laplacian(s.ux, fdops::kMetricScheme, opt.mask), inv_visc));
            fy = sub(fy, scale(fdops::laplacian(s.uy, fdops::kMetricScheme, opt.mask), inv_visc));
        }
        if (pressure_channel) {
            const int pi = s.state_index(*pressure_channel);
            if (pi < 0)
                throw ValidationError(std::string(what) + ": missing pressure channel \"" +
                                      *pressure_channel + "\"");
            auto [px, py] = fdops::gradient(s.state[static_cast<size_t>(pi)],
                                            fdops::kMetricScheme, opt.mask);
            fx = add(fx, scale(px, inv_rho));
            fy = add(fy, scale(py, inv_rho));
        }
        for (int i = 0; i < grid.height; ++i)
            for (int j = 0; j < grid.width; ++j) {
                if (!cell_included(i, j, grid.height, grid.width, opt)) continue;
                acc += std::hypot(fx.at(i, j), fy.at(i, j));
                ++n;
            }
    }
    if (n == 0) throw ValidationError(std::string(what) + ": no cells left after exclusions");
    return acc / static_cast<double>(n);
}

}  // namespace

double rmse(const Field& pred, const Field& truth) {
    require_layout(pred.grid, truth.grid, "rmse");
    double acc = 0.0;
    for (size_t n = 0; n < pred.values.size(); ++n) {
        const double d = pred.values[n] - truth.values[n];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(pred.values.size()));
}

Field speed(const Snapshot& s) {
    Field out(s.grid());
    for (size_t n = 0; n < out.values.size(); ++n)
        out.values[n] = std::hypot(s.ux.values[n], s.uy.values[n]);
    out.units = s.ux.units;
    return out;
}

double rmse_speed(const Snapshot& pred, const Snapshot& truth) {
    return rmse(speed(pred), speed(truth));
}

double burgers_residual(const Trajectory& tr, double R, const ResidualOptions& opt) {
    if (!(R > 0.0)) throw ValidationError("burgers_residual: R must be positive");
    return momentum_residual(tr, opt, 1.0 / R, nullptr, 0.0, "burgers_residual");
}

double ns_residual(const Trajectory& tr, double rho, double Re, const ResidualOptions& opt,
                   const std::string& pressure_channel) {
    if (!(rho > 0.0) || !(Re > 0.0))
        throw ValidationError("ns_residual: rho and Re must be positive");
    return momentum_residual(tr, opt, 1.0 / Re, &pressure_channel, 1.0 / rho, "ns_residual");
}

DivergenceError divergence_error(const Snapshot& s, const Field* mask) {
    s.validate();
    if (mask) require_layout(mask->grid, s.grid(), "divergence_error");
    Field div = fdops::divergence(s.ux, s.uy, fdops::kMetricScheme, mask);
    double acc = 0.0, acc_abs = 0.0;
    size_t n = 0;
    for (int i = 0; i < div.height(); ++i)
        for (int j = 0; j < div.width(); ++j) {
            if (mask && mask->at(i, j) != 0.0) continue;
            acc += div.at(i, j);
            acc_abs += std::abs(div.at(i, j));
            ++n;
        }
    if (n == 0) throw ValidationError("divergence_error: every cell is masked");
    return {acc / static_cast<double>(n), acc_abs / static_cast<double>(n)};
}

HotspotSeries hotspot_series(const Trajectory& tr, const std::string& channel, double threshold,
                             double cell_area) {
    tr.validate();
    const Snapshot& first = tr.snaps.front();
    const int idx = first.state_index(channel);
    if (idx < 0)
        throw ValidationError("hotspot_series: missing temperature channel \"" + channel + "\"");
    const double area = cell_area > 0.0 ? cell_area : first.grid().dx * first.grid().dx;

    HotspotSeries out;
    for (const Snapshot& s : tr.snaps) {
        const Field& T = s.state[static_cast<size_t>(idx)];
        double sum = 0.0;
        size_t count = 0;
        for (double v : T.values)
            if (v >= threshold) {
                sum += v;
                ++count;
            }
        out.t.push_back(s.t);
        out.empty.push_back(count == 0);
        out.temp.push_back(count == 0 ? 0.0 : sum / static_cast<double>(count));
        out.area.push_back(static_cast<double>(count) * area);
    }
    for (int k = 1; k < out.size(); ++k) {
        const double dt = out.t[static_cast<size_t>(k)] - out.t[static_cast<size_t>(k) - 1];
        out.temp_rate.push_back((out.temp[static_cast<size_t>(k)] - out.temp[static_cast<size_t>(k) - 1]) / dt);
        out.area_rate.push_back((out.area[static_cast<size_t>(k)] - out.area[static_cast<size_t>(k) - 1]) / dt);
    }
    return out;
}

namespace {

double series_rmse(const std::vector<double>& a, const std::vector<double>& b, const char* what) {
    if (a.size() != b.size()) throw ValidationError(std::string(what) + ": series length mismatch");
    if (a.empty()) return 0.0;
    double acc = 0.0;
    for (size_t n = 0; n < a.size(); ++n) {
        const double d = a[n] - b[n];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(a.size()));
}

}  // namespace

HotspotErrors hotspot_errors(const HotspotSeries& pred, const HotspotSeries& truth) {
    HotspotErrors e;
    e.temp = series_rmse(pred.temp, truth.temp, "hotspot_errors");
    e.area = series_rmse(pred.area, truth.area, "hotspot_errors");
    e.temp_rate = series_rmse(pred.temp_rate, truth.temp_rate, "hotspot_errors");
    e.area_rate = series_rmse(pred.area_rate, truth.area_rate, "hotspot_errors");
    return e;
}

MetricsRecord evaluate_pair(const Trajectory& pred, const Trajectory& truth,
                            const EvalOptions& opt) {
    pred.validate();
    truth.validate();
    if (pred.size() != truth.size())
        throw ValidationError("evaluate_pair: trajectory lengths differ");
    require_layout(pred.snaps.front().grid(), truth.snaps.front().grid(), "evaluate_pair");
    if (pred.snaps.front().state_names != truth.snaps.front().state_names)
        throw ValidationError("evaluate_pair: state channels differ");

    MetricsRecord rec;
    const auto& names = truth.snaps.front().state_names;
    double acc_u = 0.0;
    std::map<std::string, double> acc_state;
    for (const auto& nm : names) acc_state[nm] = 0.0;
    size_t cells = 0;
    for (int k = 0; k < truth.size(); ++k) {
        const Snapshot& sp = pred.snaps[static_cast<size_t>(k)];
        const Snapshot& st = truth.snaps[static_cast<size_t>(k)];
        Field vp = speed(sp), vt = speed(st);
        for (size_t n = 0; n < vp.values.size(); ++n) {
            const double d = vp.values[n] - vt.values[n];
            acc_u += d * d;
        }
        for (size_t s = 0; s < names.size(); ++s)
            for (size_t n = 0; n < vp.values.size(); ++n) {
                const double d = sp.state[s].values[n] - st.state[s].values[n];
                acc_state[names[s]] += d * d;
            }
        cells += vp.values.size();
    }
    rec.rmse_u = std::sqrt(acc_u / static_cast<double>(cells));
    for (const auto& nm : names)
        rec.rmse_state[nm] = std::sqrt(acc_state[nm] / static_cast<double>(cells));

    if (opt.R) {
        rec.resid_pred = burgers_residual(pred, *opt.R, opt.residual);
        rec.resid_truth = burgers_residual(truth, *opt.R, opt.residual);
    } else if (opt.rho && opt.Re) {
        rec.resid_pred = ns_residual(pred, *opt.rho, *opt.Re, opt.residual, opt.pressure_channel);
        rec.resid_truth = ns_residual(truth, *opt.rho, *opt.Re, opt.residual, opt.pressure_channel);
    }

    DivergenceError dp{}, dtv{};
    for (int k = 0; k < truth.size(); ++k) {
        DivergenceError a = divergence_error(pred.snaps[static_cast<size_t>(k)], opt.residual.mask);
        DivergenceError b = divergence_error(truth.snaps[static_cast<size_t>(k)], opt.residual.mask);
        dp.signed_mean += a.signed_mean;
        dp.abs_mean += a.abs_mean;
        dtv.signed_mean += b.signed_mean;
        dtv.abs_mean += b.abs_mean;
    }
    const double invT = 1.0 / static_cast<double>(truth.size());
    rec.div_pred = {dp.signed_mean * invT, dp.abs_mean * invT};
    rec.div_truth = {dtv.signed_mean * invT, dtv.abs_mean * invT};

    if (truth.snaps.front().state_index(opt.temperature_channel) >= 0) {
        HotspotSeries hp = hotspot_series(pred, opt.temperature_channel, opt.hotspot_threshold,
                                          opt.cell_area);
        HotspotSeries ht = hotspot_series(truth, opt.temperature_channel, opt.hotspot_threshold,
                                          opt.cell_area);
        rec.hotspot = hotspot_errors(hp, ht);
    }
    return rec;
}

}  // namespace parc::metrics
