#include "parc/dns.hpp"

#include <cmath>
#include <numbers>

#include "parc/fdops.hpp"
#include "parc/threads.hpp"

namespace parc::dns {

namespace {

constexpr double kPi = std::numbers::pi;

void zero_ring(Field& f) {
    const int h = f.height(), w = f.width();
    for (int j = 0; j < w; ++j) {
        f.at(0, j) = 0.0;
        f.at(h - 1, j) = 0.0;
    }
    for (int i = 0; i < h; ++i) {
        f.at(i, 0) = 0.0;
        f.at(i, w - 1) = 0.0;
    }
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t n = 0; n < a.size(); ++n) s += a[n] * b[n];
    return s;
}

// y = x - c*lap5(x) on interior cells; ring stays zero (Dirichlet). The ring
// entries of x are zero by contract so neighbor reads see the boundary value.
void apply_helmholtz(const std::vector<double>& x, std::vector<double>& y, int h, int w,
                     double c, double dx) {
    const double inv = c / (dx * dx);
    std::fill(y.begin(), y.end(), 0.0);
    for (int i = 1; i < h - 1; ++i) {
        const size_t row = static_cast<size_t>(i) * w;
        for (int j = 1; j < w - 1; ++j) {
            size_t n = row + j;
            double lap = x[n - w] + x[n + w] + x[n - 1] + x[n + 1] - 4.0 * x[n];
            y[n] = x[n] - inv * lap;
        }
    }
}

// Conjugate gradient on the SPD operator above. x is warm-started in place.
void cg_solve(const std::vector<double>& b, std::vector<double>& x, int h, int w, double c,
              double dx, double rel_tol, int max_it) {
    const size_t n = b.size();
    std::vector<double> r(n), p(n), ap(n);
    apply_helmholtz(x, ap, h, w, c, dx);
    for (size_t k = 0; k < n; ++k) r[k] = b[k] - ap[k];
    p = r;
    double rs = dot(r, r);
    double nb = std::sqrt(dot(b, b));
    if (nb == 0.0) {
        std::fill(x.begin(), x.end(), 0.0);
        return;
    }
    const double tol = rel_tol * nb;
    if (std::sqrt(rs) <= tol) return;
    for (int it = 0; it < max_it; ++it) {
        apply_helmholtz(p, ap, h, w, c, dx);
        double alpha = rs / dot(p, ap);
        for (size_t k = 0; k < n; ++k) {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        double rs2 = dot(r, r);
        if (std::sqrt(rs2) <= tol) return;
        double beta = rs2 / rs;
        for (size_t k = 0; k < n; ++k) p[k] = r[k] + beta * p[k];
        rs = rs2;
    }
    throw SolverError("cg: no convergence after " + std::to_string(max_it) +
                      " iterations (residual " + std::to_string(std::sqrt(rs)) + ")");
}

// First-order upwind u.grad(q) on the interior (the Dirichlet ring never
// moves). The implicit-Burgers reference solvers for this benchmark family
// difference advection against the flow, and the choice matters: with
// backward Euler the upwinded system is monotone, so the discrete maximum
// principle survives front formation at R = 1000, where central differences
// ring at grid scale and the peak speed grows without bound. The symmetric
// treatment of the two directions preserves the diagonal (x<->y, u<->v)
// symmetry of the Gaussian IC exactly.
Field upwind_advect(const Field& u, const Field& v, const Field& q) {
    const int h = q.height(), w = q.width();
    const double inv_dx = 1.0 / q.grid.dx;
    Field out(q.grid, 0.0);
    for (int i = 1; i < h - 1; ++i) {
        for (int j = 1; j < w - 1; ++j) {
            const double uu = u.at(i, j), vv = v.at(i, j);
            const double qx =
                uu >= 0.0 ? q.at(i, j) - q.at(i, j - 1) : q.at(i, j + 1) - q.at(i, j);
            const double qy =
                vv >= 0.0 ? q.at(i, j) - q.at(i - 1, j) : q.at(i + 1, j) - q.at(i, j);
            out.at(i, j) = (uu * qx + vv * qy) * inv_dx;
        }
    }
    return out;
}

// Max-norm over interior cells of the nonlinear backward-Euler residual
//   r = u_new - u_old + h*adv(u_new) - h*nu*lap(u_new).
double be_residual(const Field& u_new, const Field& u_old, const Field& adv_new, double h,
                   double c) {
    Field lap = fdops::laplacian(u_new, fdops::kMetricScheme);
    double worst = 0.0;
    const int hh = u_new.height(), ww = u_new.width();
    for (int i = 1; i < hh - 1; ++i) {
        for (int j = 1; j < ww - 1; ++j) {
            double r = u_new.at(i, j) - u_old.at(i, j) + h * adv_new.at(i, j) -
                       c * lap.at(i, j);
            worst = std::max(worst, std::fabs(r));
        }
    }
    return worst;
}

}  // namespace

void BurgersConfig::validate() const {
    grid.validate();
    if (!(R > 0.0)) throw ValidationError("BurgersConfig: R must be positive");
    if (!(a > 0.0)) throw ValidationError("BurgersConfig: a must be positive");
    if (!(w > 0.0)) throw ValidationError("BurgersConfig: w must be positive");
    if (!(dt_out > 0.0)) throw ValidationError("BurgersConfig: dt_out must be positive");
    if (steps_out < 0) throw ValidationError("BurgersConfig: steps_out must be >= 0");
    if (substeps < 1) throw ValidationError("BurgersConfig: substeps must be >= 1");
    if (!(picard_tol > 0.0) || picard_max < 1 || !(cg_tol > 0.0) || cg_max < 1)
        throw ValidationError("BurgersConfig: bad solver settings");
}

Snapshot gaussian_ic(const BurgersConfig& cfg) {
    cfg.validate();
    Field u(cfg.grid);
    u.units = "cm/s";
    for (int i = 0; i < cfg.grid.height; ++i) {
        for (int j = 0; j < cfg.grid.width; ++j) {
            double x = cfg.grid.x(j), y = cfg.grid.y(i);
            u.at(i, j) = cfg.a * std::exp(-(x * x + y * y) / cfg.w);
        }
    }
    zero_ring(u);
    Snapshot s;
    s.t = 0.0;
    s.ux = u;
    s.uy = u;
    return s;
}

Snapshot step_burgers(const Snapshot& state, const BurgersConfig& cfg) {
    if (!state.grid().same_layout(cfg.grid))
        throw ValidationError("step_burgers: snapshot grid does not match config");
    if (!state.state.empty())
        throw ValidationError("step_burgers: Burgers snapshots carry velocity only");

    const int h = cfg.grid.height, w = cfg.grid.width;
    const double step = cfg.substep_h();
    const double c = step * cfg.nu();

    Field u_old = state.ux, v_old = state.uy;
    zero_ring(u_old);
    zero_ring(v_old);

    Field u_cur = u_old, v_cur = v_old;
    Field adv_x(cfg.grid), adv_y(cfg.grid);
    if (cfg.advection) {
        adv_x = upwind_advect(u_cur, v_cur, u_cur);
        adv_y = upwind_advect(u_cur, v_cur, v_cur);
    }

    std::vector<double> bx(u_old.values.size()), by(u_old.values.size());
    double res = 0.0;
    for (int m = 1; m <= cfg.picard_max; ++m) {
        // rhs = u_old - h*adv(u_prev), zero on the Dirichlet ring.
        std::fill(bx.begin(), bx.end(), 0.0);
        std::fill(by.begin(), by.end(), 0.0);
        for (int i = 1; i < h - 1; ++i) {
            for (int j = 1; j < w - 1; ++j) {
                size_t n = static_cast<size_t>(i) * w + j;
                bx[n] = u_old.values[n] - step * adv_x.values[n];
                by[n] = v_old.values[n] - step * adv_y.values[n];
            }
        }
        cg_solve(bx, u_cur.values, h, w, c, cfg.grid.dx, cfg.cg_tol, cfg.cg_max);
        cg_solve(by, v_cur.values, h, w, c, cfg.grid.dx, cfg.cg_tol, cfg.cg_max);

        if (cfg.advection) {
            adv_x = upwind_advect(u_cur, v_cur, u_cur);
            adv_y = upwind_advect(u_cur, v_cur, v_cur);
        }
        res = std::max(be_residual(u_cur, u_old, adv_x, step, c),
                       be_residual(v_cur, v_old, adv_y, step, c));
        if (res <= cfg.picard_tol) {
            Snapshot out;
            out.t = state.t + step;
            out.ux = std::move(u_cur);
            out.uy = std::move(v_cur);
            out.ux.check_finite("step_burgers");
            out.uy.check_finite("step_burgers");
            return out;
        }
    }
    throw SolverError("step_burgers: Picard iteration stalled at residual " +
                      std::to_string(res) + " after " + std::to_string(cfg.picard_max) +
                      " iterations (t = " + std::to_string(state.t) + ")");
}

Trajectory generate_trajectory(const BurgersConfig& cfg) {
    cfg.validate();
    Trajectory traj;
    traj.dt = cfg.dt_out;
    traj.snaps.push_back(gaussian_ic(cfg));
    Snapshot cur = traj.snaps.front();
    for (int k = 1; k <= cfg.steps_out; ++k) {
        for (int s = 0; s < cfg.substeps; ++s) cur = step_burgers(cur, cfg);
        cur.t = static_cast<double>(k) * cfg.dt_out;  // keep times exactly on the grid
        traj.snaps.push_back(cur);
    }
    traj.validate();
    return traj;
}

std::vector<SweepEntry> sweep_dataset(const BurgersConfig& base, const std::vector<double>& Rs,
                                      const std::vector<double>& as,
                                      const std::vector<double>& ws) {
    if (Rs.empty() || as.empty() || ws.empty())
        throw ValidationError("sweep_dataset: parameter lists must be non-empty");
    const int na = static_cast<int>(as.size()), nw = static_cast<int>(ws.size());
    const int total = static_cast<int>(Rs.size()) * na * nw;
    std::vector<SweepEntry> entries(static_cast<size_t>(total));
    parallel_for(total, [&](int idx) {
        BurgersConfig cfg = base;
        cfg.R = Rs[static_cast<size_t>(idx / (na * nw))];
        cfg.a = as[static_cast<size_t>((idx / nw) % na)];
        cfg.w = ws[static_cast<size_t>(idx % nw)];
        entries[static_cast<size_t>(idx)] = SweepEntry{cfg, generate_trajectory(cfg)};
    });
    return entries;
}

BurgersParamTable burgers_train_params() {
    return {{1000, 2500, 5000, 7500, 10000},
            {0.5, 0.6, 0.7, 0.8, 0.9},
            {0.7, 0.8, 0.9, 1.0}};
}

BurgersParamTable burgers_test_params() {
    return {{100, 500, 3000, 6500, 12500, 15000},
            {0.35, 0.40, 0.45, 0.55, 0.65, 0.75, 0.85, 0.95, 1.00},
            {0.55, 0.6, 0.65, 0.75, 0.85, 0.95, 1.05}};
}

namespace {

Field sample(const GridSpec& grid, const Manufactured::Fn& fn, double t) {
    Field f(grid);
    for (int i = 0; i < grid.height; ++i)
        for (int j = 0; j < grid.width; ++j) f.at(i, j) = fn(grid.x(j), grid.y(i), t);
    f.check_finite("mms sample");
    return f;
}

}  // namespace

MmsResult mms_trajectory(const GridSpec& grid, double dt, int steps, const Manufactured& m,
                         double k) {
    grid.validate();
    if (!(dt > 0.0) || steps < 0) throw ValidationError("mms_trajectory: bad dt/steps");
    if (!m.u || !m.v || !m.dudt || !m.dvdt)
        throw ValidationError("mms_trajectory: u, v and their time derivatives are required");

    MmsResult out;
    out.traj.dt = dt;
    out.forcing.dt = dt;
    for (int n = 0; n <= steps; ++n) {
        double t = static_cast<double>(n) * dt;
        Snapshot s;
        s.t = t;
        s.ux = sample(grid, m.u, t);
        s.uy = sample(grid, m.v, t);
        Field p;
        if (m.p) {
            p = sample(grid, m.p, t);
            s.state.push_back(p);
            s.state_names.push_back("p");
        }

        // f = du*/dt + (u*.grad)u* - k lap(u*) [+ (1/rho) grad p*]
        Field fx = sample(grid, m.dudt, t);
        Field fy = sample(grid, m.dvdt, t);
        fx = add(fx, fdops::advect(s.ux, s.uy, s.ux));
        fy = add(fy, fdops::advect(s.ux, s.uy, s.uy));
        if (k != 0.0) {
            fx = sub(fx, scale(fdops::laplacian(s.ux), k));
            fy = sub(fy, scale(fdops::laplacian(s.uy), k));
        }
        if (m.p) {
            auto [px, py] = fdops::gradient(p);
            fx = add(fx, scale(px, 1.0 / m.rho));
            fy = add(fy, scale(py, 1.0 / m.rho));
        }

        Snapshot fs;
        fs.t = t;
        fs.ux = std::move(fx);
        fs.uy = std::move(fy);
        out.traj.snaps.push_back(std::move(s));
        out.forcing.snaps.push_back(std::move(fs));
    }
    out.traj.validate();
    out.forcing.validate();
    return out;
}

Manufactured uniform_decay_manufactured(double a, double lambda) {
    Manufactured m;
    m.u = [a, lambda](double, double, double t) { return a * std::exp(-lambda * t); };
    m.dudt = [a, lambda](double, double, double t) {
        return -lambda * a * std::exp(-lambda * t);
    };
    m.v = [](double, double, double) { return 0.0; };
    m.dvdt = [](double, double, double) { return 0.0; };
    return m;
}

Manufactured taylor_green_manufactured(double nu, double rho) {
    Manufactured m;
    m.rho = rho;
    m.u = [nu](double x, double y, double t) {
        return -std::cos(x) * std::sin(y) * std::exp(-2.0 * nu * t);
    };
    m.v = [nu](double x, double y, double t) {
        return std::sin(x) * std::cos(y) * std::exp(-2.0 * nu * t);
    };
    m.dudt = [nu](double x, double y, double t) {
        return 2.0 * nu * std::cos(x) * std::sin(y) * std::exp(-2.0 * nu * t);
    };
    m.dvdt = [nu](double x, double y, double t) {
        return -2.0 * nu * std::sin(x) * std::cos(y) * std::exp(-2.0 * nu * t);
    };
    m.p = [nu, rho](double x, double y, double t) {
        return -0.25 * rho * (std::cos(2.0 * x) + std::cos(2.0 * y)) *
               std::exp(-4.0 * nu * t);
    };
    return m;
}

Snapshot taylor_green(const GridSpec& grid, double nu, double rho, double t) {
    grid.validate();
    Manufactured m = taylor_green_manufactured(nu, rho);
    Snapshot s;
    s.t = t;
    s.ux = sample(grid, m.u, t);
    s.uy = sample(grid, m.v, t);
    s.state.push_back(sample(grid, m.p, t));
    s.state_names.push_back("p");
    return s;
}

GridSpec taylor_green_grid(int n) {
    return GridSpec(n, n, 2.0 * kPi / n, {0.0, 0.0});
}

}  // namespace parc::dns
