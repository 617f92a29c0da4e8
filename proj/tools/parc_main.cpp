// parc: data generation, training, rollout, evaluation, and reporting for the
// PARCv2 advection-diffusion-reaction surrogate.
//
// Every subcommand takes --config FILE plus --set key=value overrides, writes
// its outputs into --out DIR, and copies the fully resolved configuration to
// DIR/config.txt so a run is reproducible from its run directory alone.
// Exit codes: 0 success, 1 validation/contract/file-format error, 2 runtime
// failure (solver divergence, NaN loss, ...).

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "parc/dns.hpp"
#include "parc/errors.hpp"
#include "parc/fields.hpp"
#include "parc/io.hpp"
#include "parc/metrics.hpp"
#include "parc/model.hpp"
#include "parc/render.hpp"
#include "parc/rng.hpp"
#include "parc/training.hpp"

namespace {

using namespace parc;

// ---------------------------------------------------------------------------
// Config plumbing.

io::Config merge_config(const io::Config& defaults, const std::string& config_path,
                        const std::vector<std::string>& sets) {
    io::Config c = defaults;
    if (!config_path.empty())
        for (const auto& [k, v] : io::read_config(config_path).kv) c.set(k, v);
    for (const auto& s : sets) {
        const size_t eq = s.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ValidationError("--set expects key=value, got \"" + s + "\"");
        c.set(s.substr(0, eq), s.substr(eq + 1));
    }
    return c;
}

void write_run_config(const io::Config& c, const std::string& out) {
    io::ensure_dir(out);
    io::write_config(c, io::join_path(out, "config.txt"));
}

std::string traj_name(size_t i, const char* prefix) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%04zu.fld", prefix, i);
    return buf;
}

void write_dataset(const std::string& out, const std::vector<Trajectory>& trajs,
                   const std::vector<std::map<std::string, double>>& consts,
                   const std::string& split, const char* prefix = "traj") {
    if (trajs.empty()) throw ValidationError("no trajectories to write");
    io::ensure_dir(out);
    io::Manifest m;
    m.split = split;
    m.dt = trajs.front().dt;
    m.channels = trajs.front().snaps.front().channel_names();
    io::StatsAccumulator stats;
    for (size_t i = 0; i < trajs.size(); ++i) {
        const std::string name = traj_name(i, prefix);
        io::write_snapshot_file(trajs[i], io::join_path(out, name));
        stats.add(trajs[i]);
        m.entries.push_back({name, consts[i]});
    }
    m.stats = stats.finish();
    io::write_manifest(m, io::join_path(out, "manifest.txt"));
}

// Model constant channels resolve against manifest constants by name, with
// the convention that "inv_X" means 1/X (e.g. inv_R from the sweep's R).
std::vector<double> resolve_consts(const std::vector<std::string>& names,
                                   const std::map<std::string, double>& consts) {
    std::vector<double> out;
    out.reserve(names.size());
    for (const auto& n : names) {
        if (auto it = consts.find(n); it != consts.end()) {
            out.push_back(it->second);
            continue;
        }
        if (n.rfind("inv_", 0) == 0) {
            if (auto it = consts.find(n.substr(4)); it != consts.end()) {
                if (it->second == 0.0)
                    throw ValidationError("constant " + n.substr(4) + " is zero; cannot invert");
                out.push_back(1.0 / it->second);
                continue;
            }
        }
        std::string have;
        for (const auto& [k, v] : consts) have += (have.empty() ? "" : ", ") + k;
        throw ValidationError("constant channel \"" + n +
                              "\" not found in manifest entry (available: " + have + ")");
    }
    return out;
}

model::Activation act_from(const std::string& s, const std::string& key) {
    if (s == "tanh") return model::Activation::tanh;
    if (s == "relu") return model::Activation::relu;
    throw ValidationError("config key " + key + ": unknown activation \"" + s + "\"");
}

model::Scheme scheme_from(const std::string& s) {
    if (s == "heun") return model::Scheme::heun;
    if (s == "rk4") return model::Scheme::rk4;
    throw ValidationError("integrator.scheme must be heun or rk4, got \"" + s + "\"");
}

model::ModelConfig model_cfg_from(const io::Config& c, const std::vector<std::string>& data_states) {
    model::ModelConfig cfg;
    cfg.state_names = c.has("model.states") ? c.get_strings("model.states", {}) : data_states;
    cfg.const_names = c.get_strings("model.consts", {"inv_R"});
    cfg.reaction.layers = c.get_int("model.reaction.layers", 4);
    cfg.reaction.hidden = c.get_int("model.reaction.channels", 48);
    cfg.reaction.ksize = c.get_int("model.reaction.ksize", 3);
    cfg.reaction.activation =
        act_from(c.get_string("model.reaction.activation", "tanh"), "model.reaction.activation");
    cfg.correction.layers = c.get_int("model.correction.layers", 3);
    cfg.correction.hidden = c.get_int("model.correction.channels", 32);
    cfg.correction.ksize = c.get_int("model.correction.ksize", 3);
    cfg.correction.activation = act_from(c.get_string("model.correction.activation", "tanh"),
                                         "model.correction.activation");
    cfg.diffusivity_init = c.get_double("model.diffusivity_init", 0.0);
    cfg.freeze_diffusivity = c.get_bool("model.freeze_diffusivity", false);
    cfg.include_diffusion_in_momentum = c.get_bool("model.momentum_diffusion", false);
    cfg.include_advection_of_state = c.get_bool("model.state_advection", true);
    cfg.time_scale = c.get_double("model.time_scale", 0.0);
    cfg.validate();
    return cfg;
}

const std::vector<std::string> kModelKeys = {
    "model.states", "model.consts", "model.reaction.layers", "model.reaction.channels",
    "model.reaction.ksize", "model.reaction.activation", "model.correction.layers",
    "model.correction.channels", "model.correction.ksize", "model.correction.activation",
    "model.diffusivity_init", "model.freeze_diffusivity", "model.momentum_diffusion",
    "model.state_advection", "model.time_scale"};

training::Dataset load_dataset(const std::string& manifest_path, const model::ModelConfig& cfg) {
    const io::Manifest m = io::read_manifest(manifest_path);
    const std::string dir = io::dir_of(manifest_path);
    training::Dataset ds;
    for (const auto& e : m.entries) {
        training::DataItem item;
        item.traj = io::read_snapshot_file(io::join_path(dir, e.file));
        item.consts = resolve_consts(cfg.const_names, e.consts);
        ds.items.push_back(std::move(item));
    }
    ds.validate(cfg);
    return ds;
}

// ---------------------------------------------------------------------------
// gen-burgers

void cmd_gen_burgers(const io::Config& c, const std::string& out) {
    c.restrict_keys({"dns.height", "dns.width", "dns.dx", "dns.units", "dns.dt_out", "dns.steps",
                     "dns.substeps", "dns.advection", "dns.picard_tol", "dns.picard_max",
                     "dns.cg_tol", "dns.cg_max", "dns.sweep", "dns.R_list", "dns.a_list",
                     "dns.w_list", "dataset.split"});
    dns::BurgersConfig base;
    base.grid = centered_grid(c.get_int("dns.height", 64), c.get_int("dns.width", 64),
                              c.get_double("dns.dx", 6.0 / 64.0), c.get_string("dns.units", "cm"));
    base.dt_out = c.get_double("dns.dt_out", 0.02);
    base.steps_out = c.get_int("dns.steps", 100);
    base.substeps = c.get_int("dns.substeps", 15);
    base.advection = c.get_bool("dns.advection", true);
    base.picard_tol = c.get_double("dns.picard_tol", 1e-10);
    base.picard_max = c.get_int("dns.picard_max", 50);
    base.cg_tol = c.get_double("dns.cg_tol", 1e-13);
    base.cg_max = c.get_int("dns.cg_max", 500);

    const std::string sweep = c.get_string("dns.sweep", "train");
    std::vector<double> Rs, as, ws;
    std::string split = c.get_string("dataset.split", sweep == "test" ? "test" : "train");
    if (sweep == "train") {
        const auto t = dns::burgers_train_params();
        Rs = t.R, as = t.a, ws = t.w;
    } else if (sweep == "test") {
        const auto t = dns::burgers_test_params();
        Rs = t.R, as = t.a, ws = t.w;
    } else if (sweep == "none") {
        Rs = c.get_doubles("dns.R_list", {});
        as = c.get_doubles("dns.a_list", {});
        ws = c.get_doubles("dns.w_list", {});
    } else {
        throw ValidationError("dns.sweep must be train, test, or none");
    }
    if (Rs.empty() || as.empty() || ws.empty())
        throw ValidationError("gen-burgers: empty parameter lists (set dns.R_list/a_list/w_list)");

    write_run_config(c, out);
    auto sweep = dns::sweep_dataset(base, Rs, as, ws);
    std::vector<Trajectory> trajs;
    std::vector<std::map<std::string, double>> consts;
    for (auto& e : sweep) {
        consts.push_back({{"R", e.cfg.R}, {"a", e.cfg.a}, {"w", e.cfg.w}});
        trajs.push_back(std::move(e.traj));
    }
    write_dataset(out, trajs, consts, split);
    std::cout << "gen-burgers: wrote " << trajs.size() << " trajectories to " << out << "\n";
}

// ---------------------------------------------------------------------------
// gen-mms / gen-taylor-green

void cmd_gen_mms(const io::Config& c, const std::string& out) {
    c.restrict_keys({"mms.kind", "mms.a", "mms.lambda", "mms.nu", "mms.rho", "mms.k", "mms.dt",
                     "mms.steps", "grid.height", "grid.width", "grid.dx", "dataset.split"});
    const std::string kind = c.get_string("mms.kind", "uniform_decay");
    dns::Manufactured m;
    if (kind == "uniform_decay")
        m = dns::uniform_decay_manufactured(c.get_double("mms.a", 1.0),
                                            c.get_double("mms.lambda", 1.0));
    else if (kind == "taylor_green")
        m = dns::taylor_green_manufactured(c.get_double("mms.nu", 0.01),
                                           c.get_double("mms.rho", 1.0));
    else
        throw ValidationError("mms.kind must be uniform_decay or taylor_green");

    const GridSpec grid(c.get_int("grid.height", 32), c.get_int("grid.width", 32),
                        c.get_double("grid.dx", 0.1));
    write_run_config(c, out);
    const auto res = dns::mms_trajectory(grid, c.get_double("mms.dt", 0.02),
                                         c.get_int("mms.steps", 10), m, c.get_double("mms.k", 0.0));
    std::map<std::string, double> consts{{"k", c.get_double("mms.k", 0.0)},
                                         {"rho", m.rho}};
    write_dataset(out, {res.traj}, {consts}, c.get_string("dataset.split", "mms"));
    io::write_snapshot_file(res.forcing, io::join_path(out, "forcing_0000.fld"));
    std::cout << "gen-mms: wrote solution and forcing to " << out << "\n";
}

void cmd_gen_taylor_green(const io::Config& c, const std::string& out) {
    c.restrict_keys({"tg.n", "tg.nu", "tg.rho", "tg.dt", "tg.steps", "dataset.split"});
    const int n = c.get_int("tg.n", 128);
    const double nu = c.get_double("tg.nu", 0.1);
    const double rho = c.get_double("tg.rho", 1.0);
    const double dt = c.get_double("tg.dt", 0.05);
    const int steps = c.get_int("tg.steps", 20);
    if (steps < 1) throw ValidationError("tg.steps must be >= 1");

    write_run_config(c, out);
    const GridSpec grid = dns::taylor_green_grid(n);
    Trajectory tr;
    tr.dt = dt;
    for (int k = 0; k <= steps; ++k) tr.snaps.push_back(dns::taylor_green(grid, nu, rho, k * dt));
    write_dataset(out, {tr}, {{{"nu", nu}, {"rho", rho}}},
                  c.get_string("dataset.split", "taylor-green"));
    std::cout << "gen-taylor-green: wrote 1 trajectory to " << out << "\n";
}

// ---------------------------------------------------------------------------
// ingest

void cmd_ingest(const io::Config& c, const std::string& descriptor, const std::string& out) {
    c.restrict_keys({"dataset.split"});
    if (descriptor.empty()) throw ValidationError("ingest: --descriptor is required");
    write_run_config(c, out);
    io::IngestResult res = io::ingest_external(descriptor);
    write_dataset(out, {res.traj}, {res.consts}, c.get_string("dataset.split", "ingest"));
    std::cout << "ingest: wrote " << res.traj.size() << " frames"
              << (res.has_mask ? " (with obstacle mask)" : "") << " to " << out << "\n";
}

// ---------------------------------------------------------------------------
// train

void cmd_train(const io::Config& c, const std::string& data, const std::string& checkpoint,
               const std::string& out) {
    std::vector<std::string> keys = kModelKeys;
    for (const auto& k : {"train.stage", "train.epochs", "train.batch_size", "train.lr0",
                          "train.lr_halve_every", "train.lr_floor", "train.patience", "train.seed",
                          "train.stop_ratio", "integrator.scheme", "integrator.dt"})
        keys.push_back(k);
    c.restrict_keys(keys);
    if (data.empty()) throw ValidationError("train: --data MANIFEST is required");

    training::TrainConfig tc;
    tc.stage = c.get_int("train.stage", 1);
    tc.epochs = c.get_int("train.epochs", 500);
    tc.batch_size = c.get_int("train.batch_size", 8);
    tc.lr0 = c.get_double("train.lr0", 1e-4);
    tc.lr_halve_every = c.get_int("train.lr_halve_every", 100);
    tc.lr_floor = c.get_double("train.lr_floor", 1e-6);
    tc.patience = c.get_int("train.patience", 50);
    tc.seed = c.get_u64("train.seed", 0);
    tc.stop_train_ratio = c.get_double("train.stop_ratio", 0.0);
    tc.integrator.scheme = scheme_from(c.get_string("integrator.scheme", "heun"));
    tc.integrator.dt = c.get_double("integrator.dt", 0.0);
    tc.validate();

    model::Model m;
    if (tc.stage == 2) {
        if (checkpoint.empty())
            throw ValidationError("train: stage 2 requires a stage-1 checkpoint (--checkpoint)");
        io::Checkpoint ck = io::read_checkpoint(checkpoint);
        if (ck.stage != 1)
            throw ValidationError("train: --checkpoint is a stage-" + std::to_string(ck.stage) +
                                  " checkpoint; stage 2 starts from a stage-1 checkpoint");
        m = io::model_from_checkpoint(ck);
    }

    // Dataset channel layout first (a stage-1 model is configured from it).
    const io::Manifest manifest = io::read_manifest(data);
    std::vector<std::string> data_states(manifest.channels.begin() + 2, manifest.channels.end());
    if (tc.stage == 1) m.cfg = model_cfg_from(c, data_states);

    const training::Dataset ds = load_dataset(data, m.cfg);
    if (tc.stage == 1) {
        const auto norm = training::compute_normalization(ds, m.cfg);
        Rng rng(tc.seed);
        m.params = model::init_params(m.cfg, norm, rng);
    }

    write_run_config(c, out);
    training::TrainResult res = training::train(std::move(m), ds, tc);

    io::write_checkpoint(io::make_checkpoint(res.model, tc.stage, tc.seed, res.adam),
                         io::join_path(out, "checkpoint.ckpt"));
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : res.curve)
        rows.push_back({std::to_string(r.epoch), io::fmt17(r.train_loss), io::fmt17(r.val_loss),
                        io::fmt17(r.lr)});
    io::write_csv(io::join_path(out, "loss.csv"), {"epoch", "train_loss", "val_loss", "lr"}, rows);
    std::cout << "train: stage " << tc.stage << " ran " << res.stopped_epoch
              << " epochs; best validation loss " << io::fmt17(res.best_val) << " at epoch "
              << res.best_epoch << "\n";
}

// ---------------------------------------------------------------------------
// rollout

void cmd_rollout(const io::Config& c, const std::string& checkpoint, const std::string& data,
                 const std::string& out) {
    c.restrict_keys({"rollout.steps", "rollout.traj", "integrator.scheme", "integrator.dt",
                     "integrator.use_correction"});
    if (checkpoint.empty()) throw ValidationError("rollout: --checkpoint is required");
    if (data.empty()) throw ValidationError("rollout: --data MANIFEST is required");

    const io::Checkpoint ck = io::read_checkpoint(checkpoint);
    const model::Model m = io::model_from_checkpoint(ck);
    const io::Manifest manifest = io::read_manifest(data);
    const std::string dir = io::dir_of(data);

    model::IntegratorSpec spec;
    spec.scheme = scheme_from(c.get_string("integrator.scheme", "heun"));
    spec.dt = c.get_double("integrator.dt", 0.0);
    const std::string uc = c.get_string("integrator.use_correction", "auto");
    if (uc == "auto")
        spec.use_correction = ck.stage == 2;
    else
        spec.use_correction = io::Config{{{"v", uc}}}.get_bool("v", false);

    const int only = c.get_int("rollout.traj", -1);
    const int steps_cfg = c.get_int("rollout.steps", 0);

    write_run_config(c, out);
    std::vector<Trajectory> preds;
    std::vector<std::map<std::string, double>> consts;
    for (size_t i = 0; i < manifest.entries.size(); ++i) {
        if (only >= 0 && static_cast<size_t>(only) != i) continue;
        const auto& e = manifest.entries[i];
        const Trajectory truth = io::read_snapshot_file(io::join_path(dir, e.file));
        model::IntegratorSpec s = spec;
        if (s.dt == 0.0) s.dt = truth.dt;
        const int steps = steps_cfg > 0 ? steps_cfg : truth.size() - 1;
        preds.push_back(model::rollout(m, truth.snaps.front(),
                                       resolve_consts(m.cfg.const_names, e.consts), s, steps));
        consts.push_back(e.consts);
    }
    if (preds.empty()) throw ValidationError("rollout: no trajectories selected");
    write_dataset(out, preds, consts, "pred", "pred");
    std::cout << "rollout: wrote " << preds.size() << " predicted trajectories to " << out << "\n";
}

// ---------------------------------------------------------------------------
// eval

std::string opt_cell(const std::optional<double>& v) { return v ? io::fmt17(*v) : ""; }

void cmd_eval(const io::Config& c, const std::string& pred_path, const std::string& truth_path,
              const std::string& out) {
    c.restrict_keys({"eval.mode", "eval.exclude_ring", "eval.pressure_channel",
                     "eval.temperature_channel", "eval.threshold", "eval.mask_channel"});
    if (pred_path.empty() || truth_path.empty())
        throw ValidationError("eval: --pred and --truth manifests are required");
    const io::Manifest pm = io::read_manifest(pred_path);
    const io::Manifest tm = io::read_manifest(truth_path);
    if (pm.entries.size() != tm.entries.size())
        throw ValidationError("eval: manifests list different trajectory counts");
    const std::string pdir = io::dir_of(pred_path), tdir = io::dir_of(truth_path);
    const std::string mode = c.get_string("eval.mode", "auto");
    if (mode != "auto" && mode != "burgers" && mode != "ns" && mode != "none")
        throw ValidationError("eval.mode must be auto, burgers, ns, or none");

    // Fixed column order: index, file, constants (sorted union), RMSEs in
    // channel order, residuals, divergence, hotspot errors.
    std::set<std::string> const_names;
    for (const auto& e : tm.entries)
        for (const auto& [k, v] : e.consts) const_names.insert(k);
    std::vector<std::string> state_names(tm.channels.begin() + 2, tm.channels.end());

    std::vector<std::string> header{"index", "file"};
    for (const auto& k : const_names) header.push_back(k);
    header.push_back("rmse_u");
    for (const auto& s : state_names) header.push_back("rmse_" + s);
    for (const char* k : {"resid_pred", "resid_truth", "div_signed_pred", "div_abs_pred",
                          "div_signed_truth", "div_abs_truth", "hs_temp_err", "hs_area_err",
                          "hs_temp_rate_err", "hs_area_rate_err"})
        header.push_back(k);

    write_run_config(c, out);
    std::vector<std::vector<std::string>> rows;
    for (size_t i = 0; i < tm.entries.size(); ++i) {
        const Trajectory pred = io::read_snapshot_file(io::join_path(pdir, pm.entries[i].file));
        const Trajectory truth = io::read_snapshot_file(io::join_path(tdir, tm.entries[i].file));
        const auto& consts = tm.entries[i].consts;

        metrics::EvalOptions opt;
        opt.residual.exclude_boundary_ring = c.get_bool("eval.exclude_ring", true);
        opt.pressure_channel = c.get_string("eval.pressure_channel", "p");
        opt.temperature_channel = c.get_string("eval.temperature_channel", "T");
        opt.hotspot_threshold = c.get_double("eval.threshold", 875.0);
        Field mask;
        const std::string mask_ch = c.get_string("eval.mask_channel", "mask");
        if (const int mi = truth.snaps.front().state_index(mask_ch); mi >= 0) {
            mask = truth.snaps.front().state[static_cast<size_t>(mi)];
            opt.residual.mask = &mask;
        }
        const bool has_R = consts.count("R") != 0;
        const bool has_Re = consts.count("Re") != 0;
        if (mode == "burgers" || (mode == "auto" && has_R)) {
            if (!has_R) throw ValidationError("eval: burgers mode needs constant R");
            opt.R = consts.at("R");
        } else if (mode == "ns" || (mode == "auto" && has_Re)) {
            if (!has_Re) throw ValidationError("eval: ns mode needs constant Re");
            opt.Re = consts.at("Re");
            // Density convention for ingested data: rho = 4*Re unless given.
            opt.rho = consts.count("rho") ? consts.at("rho") : 4.0 * *opt.Re;
        }

        const metrics::MetricsRecord rec = metrics::evaluate_pair(pred, truth, opt);
        std::vector<std::string> row{std::to_string(i), tm.entries[i].file};
        for (const auto& k : const_names)
            row.push_back(consts.count(k) ? io::fmt17(consts.at(k)) : "");
        row.push_back(io::fmt17(rec.rmse_u));
        for (const auto& s : state_names) row.push_back(io::fmt17(rec.rmse_state.at(s)));
        row.push_back(opt_cell(rec.resid_pred));
        row.push_back(opt_cell(rec.resid_truth));
        row.push_back(io::fmt17(rec.div_pred.signed_mean));
        row.push_back(io::fmt17(rec.div_pred.abs_mean));
        row.push_back(io::fmt17(rec.div_truth.signed_mean));
        row.push_back(io::fmt17(rec.div_truth.abs_mean));
        if (rec.hotspot) {
            row.push_back(io::fmt17(rec.hotspot->temp));
            row.push_back(io::fmt17(rec.hotspot->area));
            row.push_back(io::fmt17(rec.hotspot->temp_rate));
            row.push_back(io::fmt17(rec.hotspot->area_rate));
        } else {
            for (int k = 0; k < 4; ++k) row.push_back("");
        }
        rows.push_back(std::move(row));
    }
    io::write_csv(io::join_path(out, "metrics.csv"), header, rows);
    std::cout << "eval: wrote " << rows.size() << " metric rows to " << out << "/metrics.csv\n";
}

// ---------------------------------------------------------------------------
// report

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    const std::string text = io::read_text_file(path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    std::stringstream ss(text);
    while (std::getline(ss, line)) {
        if (line.empty()) continue;
        std::vector<std::string> row;
        std::string cell;
        std::stringstream ls(line);
        while (std::getline(ls, cell, ',')) row.push_back(cell);
        if (!line.empty() && line.back() == ',') row.push_back("");
        rows.push_back(std::move(row));
    }
    return rows;
}

void cmd_report(const io::Config& c, const std::string& run, const std::string& pred_path,
                const std::string& truth_path) {
    c.restrict_keys({"report.frames", "report.traj", "report.channel"});
    if (run.empty()) throw ValidationError("report: --run DIR is required");
    const std::string metrics_csv = io::join_path(run, "metrics.csv");
    const std::string loss_csv = io::join_path(run, "loss.csv");
    const bool have_metrics = std::ifstream(metrics_csv).good();
    const bool have_loss = std::ifstream(loss_csv).good();
    if (!have_metrics && !have_loss && pred_path.empty())
        throw ValidationError("report: nothing to report in " + run +
                              " (no metrics.csv, no loss.csv, no --pred)");

    if (have_metrics) {
        const auto rows = read_csv(metrics_csv);
        if (rows.size() < 2) throw ValidationError("report: metrics.csv has no data rows");
        const auto& header = rows.front();
        auto col = [&](const std::string& name) -> int {
            auto it = std::find(header.begin(), header.end(), name);
            return it == header.end() ? -1 : static_cast<int>(it - header.begin());
        };
        const int rc = col("R"), uc = col("rmse_u");
        if (rc >= 0 && uc >= 0) {
            std::vector<std::pair<double, double>> pts;
            for (size_t i = 1; i < rows.size(); ++i)
                if (!rows[i][static_cast<size_t>(rc)].empty())
                    pts.emplace_back(io::parse_double(rows[i][static_cast<size_t>(rc)]),
                                     io::parse_double(rows[i][static_cast<size_t>(uc)]));
            std::sort(pts.begin(), pts.end());
            std::vector<std::vector<std::string>> out_rows;
            for (auto [R, v] : pts) out_rows.push_back({io::fmt17(R), io::fmt17(v)});
            io::write_csv(io::join_path(run, "rmse_vs_R.csv"), {"R", "rmse_u"}, out_rows);
            render::write_xy_svg(pts, "R", "rmse_u", io::join_path(run, "rmse_vs_R.svg"));
        }
    }

    if (have_loss) {
        const auto rows = read_csv(loss_csv);
        std::vector<training::EpochRow> curve;
        for (size_t i = 1; i < rows.size(); ++i) {
            if (rows[i].size() < 4) throw ValidationError("report: malformed loss.csv row");
            curve.push_back({static_cast<int>(io::parse_double(rows[i][0])),
                             io::parse_double(rows[i][1]), io::parse_double(rows[i][2]),
                             io::parse_double(rows[i][3])});
        }
        if (!curve.empty()) render::write_loss_svg(curve, io::join_path(run, "loss.svg"));
    }

    if (!pred_path.empty()) {
        if (truth_path.empty())
            throw ValidationError("report: --pred also needs --truth for paired frames");
        const io::Manifest pm = io::read_manifest(pred_path);
        const io::Manifest tm = io::read_manifest(truth_path);
        const int ti = c.get_int("report.traj", 0);
        if (ti < 0 || static_cast<size_t>(ti) >= pm.entries.size() ||
            static_cast<size_t>(ti) >= tm.entries.size())
            throw ValidationError("report: report.traj out of range");
        const Trajectory pred = io::read_snapshot_file(
            io::join_path(io::dir_of(pred_path), pm.entries[static_cast<size_t>(ti)].file));
        const Trajectory truth = io::read_snapshot_file(
            io::join_path(io::dir_of(truth_path), tm.entries[static_cast<size_t>(ti)].file));
        const std::string channel = c.get_string("report.channel", "speed");
        auto frame_field = [&](const Trajectory& tr, int k) -> Field {
            const Snapshot& s = tr.snaps.at(static_cast<size_t>(k));
            if (channel == "speed") return metrics::speed(s);
            if (channel == "u_x") return s.ux;
            if (channel == "u_y") return s.uy;
            const int si = s.state_index(channel);
            if (si < 0) throw ValidationError("report: unknown channel " + channel);
            return s.state[static_cast<size_t>(si)];
        };
        auto frames = c.get_doubles("report.frames", {0});
        for (double fk : frames) {
            const int k = static_cast<int>(fk);
            if (k < 0 || k >= truth.size() || k >= pred.size())
                throw ValidationError("report: frame index " + std::to_string(k) +
                                      " out of range");
            Field pf = frame_field(pred, k), tf = frame_field(truth, k);
            const double lo = std::min(reduce(pf, Reduce::min), reduce(tf, Reduce::min));
            double hi = std::max(reduce(pf, Reduce::max), reduce(tf, Reduce::max));
            if (hi == lo) hi = lo + 1.0;
            char name[64];
            std::snprintf(name, sizeof name, "frame_%03d_pred.png", k);
            render::write_field_png(pf, io::join_path(run, name), lo, hi);
            std::snprintf(name, sizeof name, "frame_%03d_truth.png", k);
            render::write_field_png(tf, io::join_path(run, name), lo, hi);
        }
    }
    std::cout << "report: artifacts written to " << run << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PARCv2 advection-diffusion-reaction surrogate toolkit"};
    app.require_subcommand(1);

    std::string config_path, out, data, checkpoint, descriptor, pred, truth, run;
    std::vector<std::string> sets;
    auto add_common = [&](CLI::App* sub, bool needs_out = true) {
        sub->add_option("--config", config_path, "key=value configuration file");
        sub->add_option("--set", sets, "override a single key (key=value, repeatable)");
        if (needs_out) sub->add_option("--out", out, "output directory")->required();
    };

    auto* gen_burgers = app.add_subcommand("gen-burgers", "Burgers DNS parameter sweep");
    add_common(gen_burgers);
    auto* gen_mms = app.add_subcommand("gen-mms", "manufactured-solution dataset with forcing");
    add_common(gen_mms);
    auto* gen_tg = app.add_subcommand("gen-taylor-green", "analytic Taylor-Green trajectory");
    add_common(gen_tg);
    auto* ingest = app.add_subcommand("ingest", "convert an external raster dump");
    add_common(ingest);
    ingest->add_option("--descriptor", descriptor, "ingestion descriptor file")->required();
    auto* train = app.add_subcommand("train", "stage-1/stage-2 training");
    add_common(train);
    train->add_option("--data", data, "dataset manifest")->required();
    train->add_option("--checkpoint", checkpoint, "stage-1 checkpoint (stage 2 only)");
    auto* rollout = app.add_subcommand("rollout", "autoregressive prediction from a checkpoint");
    add_common(rollout);
    rollout->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    rollout->add_option("--data", data, "truth manifest (initial frames and dt)")->required();
    auto* eval = app.add_subcommand("eval", "metric suite on prediction/truth manifest pairs");
    add_common(eval);
    eval->add_option("--pred", pred, "prediction manifest")->required();
    eval->add_option("--truth", truth, "ground-truth manifest")->required();
    auto* report = app.add_subcommand("report", "CSV tables and rendered images for a run");
    add_common(report, false);
    report->add_option("--run", run, "run directory with eval/train outputs")->required();
    report->add_option("--pred", pred, "prediction manifest for frame renders");
    report->add_option("--truth", truth, "truth manifest for frame renders");

    CLI11_PARSE(app, argc, argv);

    try {
        const io::Config cfg = merge_config({}, config_path, sets);
        if (gen_burgers->parsed()) cmd_gen_burgers(cfg, out);
        if (gen_mms->parsed()) cmd_gen_mms(cfg, out);
        if (gen_tg->parsed()) cmd_gen_taylor_green(cfg, out);
        if (ingest->parsed()) cmd_ingest(cfg, descriptor, out);
        if (train->parsed()) cmd_train(cfg, data, checkpoint, out);
        if (rollout->parsed()) cmd_rollout(cfg, checkpoint, data, out);
        if (eval->parsed()) cmd_eval(cfg, pred, truth, out);
        if (report->parsed()) cmd_report(cfg, run, pred, truth);
        return 0;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 2;
    }
}
