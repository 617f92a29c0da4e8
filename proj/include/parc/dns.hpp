#pragma once

#include <functional>
#include <string>
#include <vector>

#include "parc/fields.hpp"

namespace parc::dns {

// Ground-truth generation for the 2D viscous Burgers system
//   du/dt = -(u.grad)u + (1/R) lap(u),  u = 0 on the boundary,
// solved with Picard-lagged backward Euler: first-order upwind advection
// (monotone, so the maximum principle holds through front formation even at
// large R), implicit diffusion via conjugate gradient on the SPD operator.
struct BurgersConfig {
    GridSpec grid = centered_grid(64, 64, 6.0 / 64.0, "cm");  // 6 cm x 6 cm
    double R = 1000.0;  // diffusion parameter, labeled cm^2/s; 1/R multiplies the Laplacian
    double a = 0.9;     // initial amplitude, cm/s
    double w = 1.0;     // initial width, cm
    double dt_out = 0.02;  // seconds between stored snapshots
    int steps_out = 100;   // stored steps after the initial condition
    int substeps = 15;     // inner backward-Euler steps per output step
    bool advection = true;           // disabled only in linear-regime tests
    double picard_tol = 1e-10;       // max-norm nonlinear residual target
    int picard_max = 50;
    double cg_tol = 1e-13;           // relative CG residual target
    int cg_max = 500;

    double nu() const { return 1.0 / R; }
    double substep_h() const { return dt_out / substeps; }
    void validate() const;
};

// u = v = a*exp(-|r|^2/w) measured from the domain center, boundary ring
// forced to zero per the zero-velocity boundary condition.
Snapshot gaussian_ic(const BurgersConfig& cfg);

// One inner backward-Euler substep of length cfg.substep_h().
Snapshot step_burgers(const Snapshot& state, const BurgersConfig& cfg);

// Initial condition plus cfg.steps_out output snapshots at dt_out spacing.
Trajectory generate_trajectory(const BurgersConfig& cfg);

// Cartesian product over the parameter lists (R outer, then a, then w),
// generated in parallel across configs, deterministic order.
struct SweepEntry {
    BurgersConfig cfg;
    Trajectory traj;
};
std::vector<SweepEntry> sweep_dataset(const BurgersConfig& base, const std::vector<double>& Rs,
                                      const std::vector<double>& as,
                                      const std::vector<double>& ws);

// Table-row parameter lists used by the data-generation CLI.
struct BurgersParamTable {
    std::vector<double> R, a, w;
};
BurgersParamTable burgers_train_params();
BurgersParamTable burgers_test_params();

// Method of manufactured solutions: closed-form fields (and analytic time
// derivatives) sampled onto trajectories, with the implied reaction/forcing
//   f = du*/dt + (u*.grad)u* - k lap(u*) [+ (1/rho) grad(p*) when p* given]
// recorded so the differentiator has an exact target. Spatial terms are
// evaluated with the fdops stencils; time derivatives are analytic.
struct Manufactured {
    using Fn = std::function<double(double x, double y, double t)>;
    Fn u, v;        // required
    Fn dudt, dvdt;  // required, analytic
    Fn p;           // optional; enables the pressure-gradient term
    double rho = 1.0;
};

struct MmsResult {
    Trajectory traj;     // sampled u*, v* (and p* as a state channel if given)
    Trajectory forcing;  // recorded reaction term, two channels
};

MmsResult mms_trajectory(const GridSpec& grid, double dt, int steps, const Manufactured& m,
                         double k);

Manufactured uniform_decay_manufactured(double a, double lambda);
Manufactured taylor_green_manufactured(double nu, double rho);

// Taylor-Green vortex on [0, 2pi)^2:
//   u = (-cos x sin y, sin x cos y) e^{-2 nu t}
//   p = -(rho/4)(cos 2x + cos 2y) e^{-4 nu t}   (state channel "p")
Snapshot taylor_green(const GridSpec& grid, double nu, double rho, double t);
GridSpec taylor_green_grid(int n);  // n x n, dx = 2pi/n, cell j at x = j*dx

}  // namespace parc::dns
