#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "parc/dns.hpp"
#include "parc/fdops.hpp"
#include "parc/metrics.hpp"

using namespace parc;

namespace {

dns::BurgersConfig small_cfg() {
    dns::BurgersConfig cfg;
    cfg.grid = centered_grid(32, 32, 6.0 / 32.0, "cm");
    cfg.steps_out = 10;
    cfg.substeps = 10;
    return cfg;
}

double diag_asymmetry(const Snapshot& s) {
    // The initial condition has u(x,y) = v(y,x); the scheme should preserve
    // that reflection, i.e. ux(i,j) == uy(j,i) on a square grid.
    double m = 0.0;
    for (int i = 0; i < s.grid().height; ++i)
        for (int j = 0; j < s.grid().width; ++j)
            m = std::max(m, std::abs(s.ux.at(i, j) - s.uy.at(j, i)));
    return m;
}

}  // namespace

TEST_CASE("gaussian initial condition: peak, symmetry, zero boundary") {
    dns::BurgersConfig cfg = small_cfg();
    cfg.a = 0.8;
    cfg.w = 1.0;
    Snapshot ic = dns::gaussian_ic(cfg);
    CHECK(reduce(ic.ux, Reduce::max) <= 0.8);
    CHECK(reduce(ic.ux, Reduce::max) > 0.7);  // grid center cells sit near r=0
    CHECK(reduce(ic.ux, Reduce::min) == 0.0);
    CHECK(diag_asymmetry(ic) == 0.0);
    for (int j = 0; j < 32; ++j) {
        CHECK(ic.ux.at(0, j) == 0.0);
        CHECK(ic.ux.at(31, j) == 0.0);
        CHECK(ic.uy.at(j, 0) == 0.0);
        CHECK(ic.uy.at(j, 31) == 0.0);
    }
}

TEST_CASE("burgers trajectory: shape, max principle, symmetry, energy decay") {
    dns::BurgersConfig cfg = small_cfg();
    Trajectory tr = dns::generate_trajectory(cfg);
    tr.validate();
    CHECK(tr.size() == 11);
    CHECK(tr.dt == doctest::Approx(0.02));
    CHECK(tr.snaps.front().t == 0.0);

    const double max0 = reduce(tr.snaps.front().ux, Reduce::max);
    double prev_energy = 1e300;
    for (const auto& s : tr.snaps) {
        // Upwind advection plus backward Euler is monotone: the cellwise max
        // never grows and positivity is preserved, up to Picard/CG slack.
        CHECK(reduce(s.ux, Reduce::max) <= max0 * (1.0 + 1e-9));
        CHECK(reduce(s.ux, Reduce::min) >= -1e-9);
        CHECK(diag_asymmetry(s) <= 1e-8);
        const double energy =
            reduce(add(mul(s.ux, s.ux), mul(s.uy, s.uy)), Reduce::sum);
        CHECK(energy <= prev_energy * (1.0 + 1e-12));
        prev_energy = energy;
    }
}

TEST_CASE("pure diffusion run respects the discrete maximum principle strictly") {
    dns::BurgersConfig cfg = small_cfg();
    cfg.advection = false;
    cfg.R = 50.0;  // strong diffusion
    Trajectory tr = dns::generate_trajectory(cfg);
    const double max0 = reduce(tr.snaps.front().ux, Reduce::max);
    for (const auto& s : tr.snaps) {
        CHECK(reduce(s.ux, Reduce::max) <= max0 + 1e-12);
        CHECK(reduce(s.ux, Reduce::min) >= -1e-12);  // inverse positivity
    }
}

TEST_CASE("dns residual of the generated data is far below a shuffled control") {
    dns::BurgersConfig cfg = small_cfg();
    Trajectory tr = dns::generate_trajectory(cfg);
    const double resid = metrics::burgers_residual(tr, cfg.R);

    // Control: same snapshots in reversed order is not a solution.
    Trajectory rev = tr;
    std::reverse(rev.snaps.begin(), rev.snaps.end());
    for (int k = 0; k < rev.size(); ++k) rev.snaps[k].t = tr.snaps[k].t;
    const double resid_rev = metrics::burgers_residual(rev, cfg.R);
    CHECK(resid < 0.5 * resid_rev);
    CHECK(resid < 1.0);
}

TEST_CASE("solver reports failure instead of returning garbage") {
    dns::BurgersConfig cfg = small_cfg();
    cfg.cg_max = 1;
    cfg.cg_tol = 1e-15;
    CHECK_THROWS_AS(dns::generate_trajectory(cfg), SolverError);
}

TEST_CASE("config validation") {
    dns::BurgersConfig cfg = small_cfg();
    cfg.R = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = small_cfg();
    cfg.substeps = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("table parameter lists match the sweep protocol") {
    const auto train = dns::burgers_train_params();
    CHECK(train.R == std::vector<double>{1000, 2500, 5000, 7500, 10000});
    CHECK(train.a == std::vector<double>{0.5, 0.6, 0.7, 0.8, 0.9});
    CHECK(train.w == std::vector<double>{0.7, 0.8, 0.9, 1.0});
    const auto test = dns::burgers_test_params();
    CHECK(test.R.size() * test.a.size() * test.w.size() == 6 * 9 * 7);

    // Sweep order: R outer, then a, then w.
    dns::BurgersConfig base = small_cfg();
    base.steps_out = 1;
    base.substeps = 2;
    auto sweep = dns::sweep_dataset(base, {1.0, 2.0}, {0.5}, {0.7, 0.8});
    REQUIRE(sweep.size() == 4);
    CHECK(sweep[0].cfg.R == 1.0);
    CHECK(sweep[0].cfg.w == 0.7);
    CHECK(sweep[1].cfg.R == 1.0);
    CHECK(sweep[1].cfg.w == 0.8);
    CHECK(sweep[2].cfg.R == 2.0);
}

TEST_CASE("manufactured uniform decay: recorded forcing is analytic") {
    const double a = 0.7, lambda = 1.3;
    auto m = dns::uniform_decay_manufactured(a, lambda);
    GridSpec g(8, 8, 0.25);
    auto res = dns::mms_trajectory(g, 0.1, 4, m, 0.0);
    REQUIRE(res.traj.size() == 5);
    REQUIRE(res.forcing.size() == 5);
    for (int k = 0; k < res.traj.size(); ++k) {
        const double t = 0.1 * k;
        const double u = a * std::exp(-lambda * t);
        const double f = -a * lambda * std::exp(-lambda * t);
        // Spatially constant fields: every stencil term vanishes exactly, so
        // the recorded forcing is the analytic time derivative.
        CHECK(res.traj.snaps[k].ux.at(3, 5) == doctest::Approx(u).epsilon(1e-14));
        CHECK(res.forcing.snaps[k].ux.at(2, 2) == doctest::Approx(f).epsilon(1e-13));
        // The decaying component is u alone; v = 0, so its forcing vanishes.
        CHECK(res.traj.snaps[k].uy.at(3, 5) == 0.0);
        CHECK(res.forcing.snaps[k].uy.at(5, 1) == 0.0);
    }
}

TEST_CASE("taylor-green snapshot matches the closed form and stays solenoidal") {
    const double nu = 0.05, rho = 2.0;
    GridSpec g = dns::taylor_green_grid(48);
    Snapshot s = dns::taylor_green(g, nu, rho, 0.3);
    const double decay = std::exp(-2.0 * nu * 0.3);
    const double pdecay = std::exp(-4.0 * nu * 0.3);
    for (int idx : {0, 7, 23}) {
        const double x = g.x(idx), y = g.y(idx);
        CHECK(s.ux.at(idx, idx) == doctest::Approx(-std::cos(x) * std::sin(y) * decay));
        CHECK(s.uy.at(idx, idx) == doctest::Approx(std::sin(x) * std::cos(y) * decay));
    }
    REQUIRE(s.state_index("p") == 0);
    const double x0 = g.x(5), y0 = g.y(9);
    CHECK(s.state[0].at(9, 5) ==
          doctest::Approx(-(rho / 4.0) * (std::cos(2 * x0) + std::cos(2 * y0)) * pdecay));

    const auto div = metrics::divergence_error(s);
    CHECK(std::abs(div.abs_mean) < 5e-3);  // stencil error only
}

TEST_CASE("taylor-green manufactured forcing shrinks at second order") {
    auto m = dns::taylor_green_manufactured(0.05, 1.0);
    auto mean_forcing = [&](int n) {
        auto res = dns::mms_trajectory(dns::taylor_green_grid(n), 0.05, 2, m, 0.05);
        double acc = 0.0;
        size_t cnt = 0;
        for (const auto& s : res.forcing.snaps) {
            acc += reduce(abs(s.ux), Reduce::sum) + reduce(abs(s.uy), Reduce::sum);
            cnt += 2 * static_cast<size_t>(s.grid().cells());
        }
        return acc / static_cast<double>(cnt);
    };
    const double e24 = mean_forcing(24);
    const double e48 = mean_forcing(48);
    const double order = std::log2(e24 / e48);
    CHECK(order == doctest::Approx(2.0).epsilon(0.15));
}
