// Python bindings: numpy-backed access to the field stencils, the DNS data
// generators, snapshot/manifest/checkpoint files, the surrogate model, the
// training loop, and the metric suite. Arrays are float64 and laid out
// [T, C, H, W] for trajectories, [C, H, W] for single snapshots.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "parc/dns.hpp"
#include "parc/errors.hpp"
#include "parc/fdops.hpp"
#include "parc/io.hpp"
#include "parc/metrics.hpp"
#include "parc/model.hpp"
#include "parc/rng.hpp"
#include "parc/training.hpp"

namespace py = pybind11;
using namespace parc;

namespace {

using DArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Field field_from_array(const DArray& a, double dx) {
    if (a.ndim() != 2) throw ValidationError("expected a 2D array [H, W]");
    GridSpec g(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), dx);
    Field f(g);
    std::copy(a.data(), a.data() + a.size(), f.values.begin());
    f.check_finite("field_from_array");
    return f;
}

py::array field_to_array(const Field& f) {
    DArray out({f.height(), f.width()});
    std::copy(f.values.begin(), f.values.end(), out.mutable_data());
    return out;
}

fdops::StencilScheme scheme_from_name(const std::string& boundary) {
    if (boundary == "one_sided2") return fdops::kMetricScheme;
    if (boundary == "replicate") return fdops::kModelScheme;
    throw ValidationError("boundary must be one_sided2 or replicate");
}

Snapshot snapshot_from_array(const DArray& a, const std::vector<std::string>& channels,
                             const GridSpec& g, double t) {
    if (a.ndim() != 3) throw ValidationError("expected a 3D array [C, H, W]");
    const int C = static_cast<int>(a.shape(0));
    if (C != static_cast<int>(channels.size()))
        throw ValidationError("channel names do not match the array's first axis");
    if (C < 2 || channels[0] != "u_x" || channels[1] != "u_y")
        throw ValidationError("channels must start with u_x, u_y");
    if (static_cast<int>(a.shape(1)) != g.height || static_cast<int>(a.shape(2)) != g.width)
        throw ValidationError("array shape does not match the grid");
    Snapshot s;
    s.t = t;
    const size_t plane = static_cast<size_t>(g.cells());
    auto chan = [&](int c) {
        Field f(g);
        std::copy(a.data() + c * plane, a.data() + (c + 1) * plane, f.values.begin());
        f.check_finite("snapshot_from_array");
        return f;
    };
    s.ux = chan(0);
    s.uy = chan(1);
    for (int c = 2; c < C; ++c) {
        s.state.push_back(chan(c));
        s.state_names.push_back(channels[static_cast<size_t>(c)]);
    }
    return s;
}

py::array trajectory_to_array(const Trajectory& tr) {
    const Snapshot& s0 = tr.snaps.front();
    const int C = s0.n_channels(), H = s0.grid().height, W = s0.grid().width;
    DArray out({tr.size(), C, H, W});
    double* p = out.mutable_data();
    for (const auto& s : tr.snaps)
        for (int c = 0; c < C; ++c) {
            const auto& v = s.channel(c).values;
            p = std::copy(v.begin(), v.end(), p);
        }
    return out;
}

Trajectory trajectory_from_array(const DArray& a, const std::vector<std::string>& channels,
                                 double dx, double dt, double t0) {
    if (a.ndim() != 4) throw ValidationError("expected a 4D array [T, C, H, W]");
    GridSpec g = centered_grid(static_cast<int>(a.shape(2)), static_cast<int>(a.shape(3)), dx);
    Trajectory tr;
    tr.dt = dt;
    const int T = static_cast<int>(a.shape(0));
    for (int k = 0; k < T; ++k) {
        DArray frame({static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)),
                      static_cast<int>(a.shape(3))});
        const size_t n = static_cast<size_t>(frame.size());
        std::copy(a.data() + static_cast<size_t>(k) * n, a.data() + (k + 1) * n,
                  frame.mutable_data());
        tr.snaps.push_back(snapshot_from_array(frame, channels, g, t0 + k * dt));
    }
    tr.validate();
    return tr;
}

struct PyModel {
    model::Model m;
    int stage = 1;

    static PyModel load(const std::string& path) {
        io::Checkpoint ck = io::read_checkpoint(path);
        return {io::model_from_checkpoint(ck), ck.stage};
    }

    std::vector<std::string> channels() const {
        std::vector<std::string> out{"u_x", "u_y"};
        out.insert(out.end(), m.cfg.state_names.begin(), m.cfg.state_names.end());
        return out;
    }

    py::array differentiate(const DArray& fields, const std::vector<double>& consts,
                            double dx) const {
        GridSpec g(static_cast<int>(fields.shape(1)), static_cast<int>(fields.shape(2)), dx);
        Snapshot s = snapshot_from_array(fields, channels(), g, 0.0);
        auto F = model::differentiate(m, s, consts);
        DArray out({static_cast<int>(F.size()), g.height, g.width});
        double* p = out.mutable_data();
        for (const auto& f : F) p = std::copy(f.values.begin(), f.values.end(), p);
        return out;
    }

    py::array rollout(const DArray& initial, const std::vector<double>& consts, double dx,
                      double dt, int steps, const std::string& scheme,
                      std::optional<bool> correction) const {
        GridSpec g(static_cast<int>(initial.shape(1)), static_cast<int>(initial.shape(2)), dx);
        Snapshot s0 = snapshot_from_array(initial, channels(), g, 0.0);
        model::IntegratorSpec spec;
        spec.scheme = scheme == "rk4" ? model::Scheme::rk4 : model::Scheme::heun;
        if (scheme != "rk4" && scheme != "heun")
            throw ValidationError("scheme must be heun or rk4");
        spec.dt = dt;
        spec.use_correction = correction.value_or(stage == 2);
        Trajectory tr = model::rollout(m, s0, consts, spec, steps);
        return trajectory_to_array(tr);
    }
};

py::dict train_py(const std::string& manifest_path, int stage,
                  std::optional<std::string> checkpoint, std::optional<std::string> out,
                  std::vector<std::string> consts, std::tuple<int, int, int, std::string> reaction,
                  std::tuple<int, int, int, std::string> correction, double diffusivity_init,
                  double time_scale, int epochs, int batch_size, double lr0, int lr_halve_every,
                  double lr_floor, int patience, uint64_t seed, const std::string& scheme,
                  double stop_train_ratio) {
    auto act = [](const std::string& s) {
        if (s == "tanh") return model::Activation::tanh;
        if (s == "relu") return model::Activation::relu;
        throw ValidationError("activation must be tanh or relu");
    };

    training::TrainConfig tc;
    tc.stage = stage;
    tc.epochs = epochs;
    tc.batch_size = batch_size;
    tc.lr0 = lr0;
    tc.lr_halve_every = lr_halve_every;
    tc.lr_floor = lr_floor;
    tc.patience = patience;
    tc.seed = seed;
    tc.stop_train_ratio = stop_train_ratio;
    tc.integrator.scheme = scheme == "rk4" ? model::Scheme::rk4 : model::Scheme::heun;
    tc.validate();

    model::Model m;
    if (stage == 2) {
        if (!checkpoint)
            throw ValidationError("stage 2 requires a stage-1 checkpoint");
        io::Checkpoint ck = io::read_checkpoint(*checkpoint);
        if (ck.stage != 1) throw ValidationError("stage 2 starts from a stage-1 checkpoint");
        m = io::model_from_checkpoint(ck);
    }

    const io::Manifest manifest = io::read_manifest(manifest_path);
    if (stage == 1) {
        model::ModelConfig cfg;
        cfg.state_names.assign(manifest.channels.begin() + 2, manifest.channels.end());
        cfg.const_names = std::move(consts);
        auto [rl, rc, rk, ra] = reaction;
        cfg.reaction = {rl, rc, rk, act(ra)};
        auto [cl, cc, ck_, ca] = correction;
        cfg.correction = {cl, cc, ck_, act(ca)};
        cfg.diffusivity_init = diffusivity_init;
        cfg.time_scale = time_scale;
        cfg.validate();
        m.cfg = cfg;
    }

    const std::string dir = io::dir_of(manifest_path);
    training::Dataset ds;
    for (const auto& e : manifest.entries) {
        training::DataItem item;
        item.traj = io::read_snapshot_file(io::join_path(dir, e.file));
        for (const auto& name : m.cfg.const_names) {
            if (auto it = e.consts.find(name); it != e.consts.end())
                item.consts.push_back(it->second);
            else if (name.rfind("inv_", 0) == 0 && e.consts.count(name.substr(4)))
                item.consts.push_back(1.0 / e.consts.at(name.substr(4)));
            else
                throw ValidationError("constant " + name + " not found in manifest entry");
        }
        ds.items.push_back(std::move(item));
    }
    ds.validate(m.cfg);

    if (stage == 1) {
        Rng rng(seed);
        m.params = model::init_params(m.cfg, training::compute_normalization(ds, m.cfg), rng);
    }

    training::TrainResult res;
    {
        py::gil_scoped_release release;
        res = training::train(std::move(m), ds, tc);
    }

    if (out) io::write_checkpoint(io::make_checkpoint(res.model, stage, seed, res.adam), *out);

    DArray curve({static_cast<int>(res.curve.size()), 4});
    double* p = curve.mutable_data();
    for (const auto& r : res.curve) {
        *p++ = r.epoch;
        *p++ = r.train_loss;
        *p++ = r.val_loss;
        *p++ = r.lr;
    }
    py::dict d;
    d["curve"] = curve;
    d["best_epoch"] = res.best_epoch;
    d["best_val"] = res.best_val;
    d["stopped_epoch"] = res.stopped_epoch;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, mod) {
    mod.doc() = "PARCv2 advection-diffusion-reaction surrogate: core operations";

    py::register_exception<ValidationError>(mod, "ValidationError", PyExc_ValueError);
    py::register_exception<NumericsError>(mod, "NumericsError", PyExc_ArithmeticError);
    py::register_exception<SolverError>(mod, "SolverError", PyExc_RuntimeError);
    py::register_exception<IoError>(mod, "IoError", PyExc_OSError);
    py::register_exception<ContractError>(mod, "ContractError", PyExc_RuntimeError);

    // Stencils.
    mod.def(
        "gradient",
        [](const DArray& f, double dx, const std::string& boundary) {
            auto [gx, gy] = fdops::gradient(field_from_array(f, dx), scheme_from_name(boundary));
            return py::make_tuple(field_to_array(gx), field_to_array(gy));
        },
        py::arg("field"), py::arg("dx"), py::arg("boundary") = "one_sided2");
    mod.def(
        "laplacian",
        [](const DArray& f, double dx, const std::string& boundary) {
            return field_to_array(fdops::laplacian(field_from_array(f, dx),
                                                   scheme_from_name(boundary)));
        },
        py::arg("field"), py::arg("dx"), py::arg("boundary") = "one_sided2");
    mod.def(
        "divergence",
        [](const DArray& ux, const DArray& uy, double dx, const std::string& boundary) {
            return field_to_array(fdops::divergence(field_from_array(ux, dx),
                                                    field_from_array(uy, dx),
                                                    scheme_from_name(boundary)));
        },
        py::arg("ux"), py::arg("uy"), py::arg("dx"), py::arg("boundary") = "one_sided2");

    // Data generation.
    mod.def(
        "burgers_trajectory",
        [](double R, double a, double w, int n, double dx, double dt, int steps, int substeps) {
            dns::BurgersConfig cfg;
            cfg.grid = centered_grid(n, n, dx, "cm");
            cfg.R = R;
            cfg.a = a;
            cfg.w = w;
            cfg.dt_out = dt;
            cfg.steps_out = steps;
            cfg.substeps = substeps;
            Trajectory tr;
            {
                py::gil_scoped_release release;
                tr = dns::generate_trajectory(cfg);
            }
            return trajectory_to_array(tr);
        },
        py::arg("R") = 1000.0, py::arg("a") = 0.9, py::arg("w") = 1.0, py::arg("n") = 64,
        py::arg("dx") = 6.0 / 64.0, py::arg("dt") = 0.02, py::arg("steps") = 100,
        py::arg("substeps") = 15);
    mod.def(
        "taylor_green",
        [](int n, double nu, double rho, double t) {
            Snapshot s = dns::taylor_green(dns::taylor_green_grid(n), nu, rho, t);
            DArray out({3, n, n});
            double* p = out.mutable_data();
            p = std::copy(s.ux.values.begin(), s.ux.values.end(), p);
            p = std::copy(s.uy.values.begin(), s.uy.values.end(), p);
            std::copy(s.state[0].values.begin(), s.state[0].values.end(), p);
            return out;
        },
        py::arg("n") = 128, py::arg("nu") = 0.1, py::arg("rho") = 1.0, py::arg("t") = 0.0);

    // Snapshot files.
    mod.def("load_trajectory", [](const std::string& path) {
        Trajectory tr = io::read_snapshot_file(path);
        py::dict d;
        d["data"] = trajectory_to_array(tr);
        d["channels"] = tr.snaps.front().channel_names();
        d["dx"] = tr.snaps.front().grid().dx;
        d["dt"] = tr.dt;
        d["t0"] = tr.t0();
        return d;
    });
    mod.def(
        "save_trajectory",
        [](const std::string& path, const DArray& data, const std::vector<std::string>& channels,
           double dx, double dt, double t0) {
            io::write_snapshot_file(trajectory_from_array(data, channels, dx, dt, t0), path);
        },
        py::arg("path"), py::arg("data"), py::arg("channels"), py::arg("dx"), py::arg("dt"),
        py::arg("t0") = 0.0);

    // Model inference.
    py::class_<PyModel>(mod, "Model")
        .def_static("load", &PyModel::load, py::arg("checkpoint"))
        .def_property_readonly("stage", [](const PyModel& pm) { return pm.stage; })
        .def_property_readonly("channels", &PyModel::channels)
        .def_property_readonly("const_names",
                               [](const PyModel& pm) { return pm.m.cfg.const_names; })
        .def("differentiate", &PyModel::differentiate, py::arg("fields"), py::arg("consts"),
             py::arg("dx"))
        .def("rollout", &PyModel::rollout, py::arg("initial"), py::arg("consts"), py::arg("dx"),
             py::arg("dt"), py::arg("steps"), py::arg("scheme") = "heun",
             py::arg("correction") = std::nullopt);

    // Training.
    mod.def("train", &train_py, py::arg("manifest"), py::arg("stage") = 1,
            py::arg("checkpoint") = std::nullopt, py::arg("out") = std::nullopt,
            py::arg("consts") = std::vector<std::string>{},
            py::arg("reaction") = std::make_tuple(4, 48, 3, std::string("tanh")),
            py::arg("correction") = std::make_tuple(3, 32, 3, std::string("tanh")),
            py::arg("diffusivity_init") = 0.0, py::arg("time_scale") = 0.0,
            py::arg("epochs") = 500, py::arg("batch_size") = 8, py::arg("lr0") = 1e-4,
            py::arg("lr_halve_every") = 100, py::arg("lr_floor") = 1e-6, py::arg("patience") = 50,
            py::arg("seed") = 0, py::arg("scheme") = "heun", py::arg("stop_train_ratio") = 0.0);

    // Metrics.
    mod.def("rmse", [](const DArray& a, const DArray& b) {
        return metrics::rmse(field_from_array(a, 1.0), field_from_array(b, 1.0));
    });
    mod.def(
        "burgers_residual",
        [](const DArray& data, const std::vector<std::string>& channels, double dx, double dt,
           double R, bool exclude_ring) {
            metrics::ResidualOptions opt;
            opt.exclude_boundary_ring = exclude_ring;
            return metrics::burgers_residual(trajectory_from_array(data, channels, dx, dt, 0.0),
                                             R, opt);
        },
        py::arg("data"), py::arg("channels"), py::arg("dx"), py::arg("dt"), py::arg("R"),
        py::arg("exclude_ring") = true);
    mod.def(
        "divergence_error",
        [](const DArray& ux, const DArray& uy, double dx) {
            Snapshot s;
            s.ux = field_from_array(ux, dx);
            s.uy = field_from_array(uy, dx);
            auto d = metrics::divergence_error(s);
            return py::make_tuple(d.signed_mean, d.abs_mean);
        },
        py::arg("ux"), py::arg("uy"), py::arg("dx"));
    mod.def(
        "hotspot_series",
        [](const DArray& data, const std::vector<std::string>& channels, double dx, double dt,
           const std::string& channel, double threshold) {
            auto hs = metrics::hotspot_series(trajectory_from_array(data, channels, dx, dt, 0.0),
                                              channel, threshold);
            py::dict d;
            d["t"] = hs.t;
            d["temp"] = hs.temp;
            d["area"] = hs.area;
            d["temp_rate"] = hs.temp_rate;
            d["area_rate"] = hs.area_rate;
            return d;
        },
        py::arg("data"), py::arg("channels"), py::arg("dx"), py::arg("dt"),
        py::arg("channel") = "T", py::arg("threshold") = 875.0);
}
