#include "parc/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace parc::model {

namespace {

struct LayerDims {
    int cin, cout;
};

// Channel plan of a conv stack: in -> hidden -> ... -> hidden -> out.
std::vector<LayerDims> stack_dims(int in_c, int out_c, const ConvStackConfig& sc) {
    std::vector<LayerDims> dims(static_cast<size_t>(sc.layers));
    for (int l = 0; l < sc.layers; ++l) {
        dims[static_cast<size_t>(l)].cin = l == 0 ? in_c : sc.hidden;
        dims[static_cast<size_t>(l)].cout = l == sc.layers - 1 ? out_c : sc.hidden;
    }
    return dims;
}

// Preimage of the stable softplus. softplus(-800) underflows to exactly 0, so
// a zero diffusivity round-trips exactly; large k maps to itself within eps.
double inv_softplus(double k) {
    if (k <= 0.0) return -800.0;
    if (k > 30.0) return k;
    return std::log(std::expm1(k));
}

const char* act_name(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }

std::string fmt_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void check_stack(const char* what, const ConvStackConfig& sc) {
    if (sc.layers < 1) throw ValidationError(std::string(what) + ": needs at least one layer");
    if (sc.hidden < 1) throw ValidationError(std::string(what) + ": hidden channels must be positive");
    if (sc.ksize < 1 || sc.ksize % 2 == 0)
        throw ValidationError(std::string(what) + ": kernel size must be odd and positive");
}

constexpr auto kBoundary = detail::LineBoundary::replicate;

}  // namespace

void ModelConfig::validate() const {
    check_stack("reaction stack", reaction);
    check_stack("correction stack", correction);
    std::vector<std::string> names{"u_x", "u_y"};
    names.insert(names.end(), state_names.begin(), state_names.end());
    names.insert(names.end(), const_names.begin(), const_names.end());
    for (const auto& n : names)
        if (n.empty()) throw ValidationError("ModelConfig: empty channel name");
    std::sort(names.begin(), names.end());
    if (std::adjacent_find(names.begin(), names.end()) != names.end())
        throw ValidationError("ModelConfig: duplicate channel name");
    if (!(diffusivity_init >= 0.0) || !std::isfinite(diffusivity_init))
        throw ValidationError("ModelConfig: diffusivity_init must be finite and >= 0");
    if (!(time_scale >= 0.0) || !std::isfinite(time_scale))
        throw ValidationError("ModelConfig: time_scale must be finite and >= 0");
}

std::string canonical_config(const ModelConfig& cfg) {
    cfg.validate();
    auto join = [](const std::vector<std::string>& xs) {
        std::string out;
        for (size_t i = 0; i < xs.size(); ++i) {
            if (i) out += ',';
            out += xs[i];
        }
        return out;
    };
    auto stack_line = [](const ConvStackConfig& sc) {
        std::ostringstream os;
        os << sc.layers << 'x' << sc.hidden << 'x' << sc.ksize << ',' << act_name(sc.activation);
        return os.str();
    };
    std::ostringstream os;
    os << "states=" << join(cfg.state_names) << '\n'
       << "consts=" << join(cfg.const_names) << '\n'
       << "reaction=" << stack_line(cfg.reaction) << '\n'
       << "correction=" << stack_line(cfg.correction) << '\n'
       << "diffusivity_init=" << fmt_double(cfg.diffusivity_init) << '\n'
       << "freeze_diffusivity=" << (cfg.freeze_diffusivity ? 1 : 0) << '\n'
       << "momentum_diffusion=" << (cfg.include_diffusion_in_momentum ? 1 : 0) << '\n'
       << "state_advection=" << (cfg.include_advection_of_state ? 1 : 0) << '\n'
       << "time_scale=" << fmt_double(cfg.time_scale) << '\n';
    return os.str();
}

uint64_t config_digest(const ModelConfig& cfg) {
    std::string s = canonical_config(cfg);
    return fnv1a(s.data(), s.size());
}

Normalization identity_normalization(const ModelConfig& cfg) {
    Normalization n;
    n.center.assign(static_cast<size_t>(cfg.n_inputs()), 0.0);
    n.scale.assign(static_cast<size_t>(cfg.n_inputs()), 1.0);
    n.time_scale = 1.0;
    return n;
}

ParamStore init_params(const ModelConfig& cfg, const Normalization& norm, Rng& rng) {
    cfg.validate();
    const size_t ni = static_cast<size_t>(cfg.n_inputs());
    if (norm.center.size() != ni || norm.scale.size() != ni)
        throw ValidationError("init_params: normalization size does not match input channels");
    for (double s : norm.scale)
        if (!(s > 0.0) || !std::isfinite(s))
            throw ValidationError("init_params: normalization scales must be positive");
    if (!(norm.time_scale > 0.0) || !std::isfinite(norm.time_scale))
        throw ValidationError("init_params: time scale must be positive");

    ParamStore ps;
    // Draw order is fixed: reaction_u, reaction_x, then correction stacks.
    // Weights are uniform in +-1/sqrt(fan_in), row-major; biases start at zero.
    auto add_stack = [&](const std::string& prefix, const ConvStackConfig& sc, int in_c, int out_c,
                         bool zero_final) {
        auto dims = stack_dims(in_c, out_c, sc);
        for (int l = 0; l < sc.layers; ++l) {
            const auto [cin, cout] = dims[static_cast<size_t>(l)];
            ParamBlock w;
            w.shape = {cout, cin, sc.ksize, sc.ksize};
            w.v.assign(static_cast<size_t>(cout) * cin * sc.ksize * sc.ksize, 0.0);
            if (!(zero_final && l == sc.layers - 1)) {
                const double bound = 1.0 / std::sqrt(double(cin) * sc.ksize * sc.ksize);
                for (double& x : w.v) x = rng.uniform(-bound, bound);
            }
            ps.add(prefix + ".w" + std::to_string(l), std::move(w));
            ParamBlock b;
            b.shape = {cout};
            b.v.assign(static_cast<size_t>(cout), 0.0);
            ps.add(prefix + ".b" + std::to_string(l), std::move(b));
        }
    };

    add_stack("diff.reaction_u", cfg.reaction, cfg.n_inputs(), 2, false);
    if (cfg.n_state() > 0) {
        add_stack("diff.reaction_x", cfg.reaction, cfg.n_inputs(), cfg.n_state(), false);
        ParamBlock k;
        k.shape = {cfg.n_state()};
        k.v.assign(static_cast<size_t>(cfg.n_state()), inv_softplus(cfg.diffusivity_init));
        k.trainable = !cfg.freeze_diffusivity;
        ps.add("diff.k_raw", std::move(k));
    }
    if (cfg.include_diffusion_in_momentum) {
        ParamBlock k;
        k.shape = {1};
        k.v.assign(1, inv_softplus(cfg.diffusivity_init));
        k.trainable = !cfg.freeze_diffusivity;
        ps.add("diff.k_mom_raw", std::move(k));
    }
    // The correction sees the normalized fields and their normalized rates,
    // per channel group; its final layer starts at zero so S == 0 initially.
    add_stack("corr.correction_u", cfg.correction, 4, 2, true);
    if (cfg.n_state() > 0)
        add_stack("corr.correction_x", cfg.correction, 2 * cfg.n_state(), cfg.n_state(), true);

    ParamBlock center;
    center.shape = {cfg.n_inputs()};
    center.v = norm.center;
    center.trainable = false;
    ps.add("norm.center", std::move(center));
    ParamBlock scl;
    scl.shape = {cfg.n_inputs()};
    scl.v = norm.scale;
    scl.trainable = false;
    ps.add("norm.scale", std::move(scl));
    ParamBlock ts;
    ts.shape = {1};
    ts.v.assign(1, norm.time_scale);
    ts.trainable = false;
    ps.add("norm.time_scale", std::move(ts));
    return ps;
}

ad::Node* psi_step(ad::Tape& tape, const std::function<ad::Node*(ad::Node*)>& F, ad::Node* y0,
                   const IntegratorSpec& spec, ad::Node** f0_out) {
    if (!(spec.dt > 0.0) || !std::isfinite(spec.dt))
        throw ValidationError("psi_step: dt must be positive");
    const double dt = spec.dt;
    if (spec.scheme == Scheme::heun) {
        ad::Node* k1 = F(y0);
        ad::Node* mid = tape.add(y0, tape.scale(k1, dt));
        ad::Node* k2 = F(mid);
        if (f0_out) *f0_out = k1;
        return tape.scale(tape.add(k1, k2), 0.5 * dt);
    }
    ad::Node* k1 = F(y0);
    ad::Node* k2 = F(tape.add(y0, tape.scale(k1, 0.5 * dt)));
    ad::Node* k3 = F(tape.add(y0, tape.scale(k2, 0.5 * dt)));
    ad::Node* k4 = F(tape.add(y0, tape.scale(k3, dt)));
    if (f0_out) *f0_out = k1;
    ad::Node* mid = tape.scale(tape.add(k2, k3), 2.0);
    return tape.scale(tape.add(tape.add(k1, k4), mid), dt / 6.0);
}

ModelGraph::ModelGraph(ad::Tape& tape, const Model& m, const GridSpec& grid)
    : tape_(tape), model_(m), grid_(grid) {
    m.cfg.validate();
    grid.validate();
    const auto& center = m.params.at("norm.center");
    const auto& scale = m.params.at("norm.scale");
    const auto& ts = m.params.at("norm.time_scale");
    const size_t ni = static_cast<size_t>(m.cfg.n_inputs());
    if (center.v.size() != ni || scale.v.size() != ni || ts.v.size() != 1)
        throw ValidationError("model: normalization blocks do not match the configuration");
    for (double s : scale.v)
        if (!(s > 0.0)) throw ValidationError("model: normalization scales must be positive");
    if (!(ts.v[0] > 0.0)) throw ValidationError("model: time scale must be positive");
    center_ = center.v;
    scale_ = scale.v;
    time_scale_ = ts.v[0];

    // One leaf per parameter block; the diffusivities become one-element
    // leaves so they can drive mul_scalar individually.
    for (const auto& [name, blk] : m.params.blocks) {
        if (name.rfind("norm.", 0) == 0) continue;
        auto& list = leaves_[name];
        if (name == "diff.k_raw" || name == "diff.k_mom_raw") {
            for (double x : blk.v) {
                Tensor t(1, 1, 1);
                t.v[0] = x;
                list.push_back(tape_.leaf(std::move(t), blk.trainable));
            }
        } else {
            Tensor t(1, 1, static_cast<int>(blk.count()));
            t.v = blk.v;
            list.push_back(tape_.leaf(std::move(t), blk.trainable));
        }
    }
}

ad::Node* ModelGraph::evolving_leaf(const Snapshot& s) const {
    s.validate();
    if (!s.grid().same_layout(grid_))
        throw ValidationError("model: snapshot grid does not match the graph grid");
    if (s.n_channels() != model_.cfg.n_evolving())
        throw ValidationError("model: snapshot has " + std::to_string(s.n_channels()) +
                              " channels, model expects " +
                              std::to_string(model_.cfg.n_evolving()));
    Tensor t(model_.cfg.n_evolving(), grid_.height, grid_.width);
    for (int c = 0; c < t.c; ++c) {
        const Field& f = s.channel(c);
        std::copy(f.values.begin(), f.values.end(), t.channel(c));
    }
    return tape_.leaf(std::move(t));
}

ad::Node* ModelGraph::evolving_leaf(Tensor t) const {
    if (t.c != model_.cfg.n_evolving() || t.h != grid_.height || t.w != grid_.width)
        throw ValidationError("model: tensor shape does not match the configuration");
    return tape_.leaf(std::move(t));
}

ad::Node* ModelGraph::consts_node(const std::vector<double>& consts) const {
    const int nc = model_.cfg.n_const();
    if (static_cast<int>(consts.size()) != nc)
        throw ValidationError("model: expected " + std::to_string(nc) + " constant values, got " +
                              std::to_string(consts.size()));
    if (nc == 0) return nullptr;
    Tensor t(nc, grid_.height, grid_.width);
    const int ne = model_.cfg.n_evolving();
    for (int k = 0; k < nc; ++k) {
        const size_t c = static_cast<size_t>(ne + k);
        const double v = (consts[static_cast<size_t>(k)] - center_[c]) / scale_[c];
        std::fill(t.channel(k), t.channel(k) + t.plane(), v);
    }
    return tape_.leaf(std::move(t));
}

ad::Node* ModelGraph::normalize_evolving(ad::Node* evolving) const {
    const int ne = model_.cfg.n_evolving();
    Tensor scl(ne, 1, 1), shift(ne, 1, 1);
    for (int c = 0; c < ne; ++c) {
        scl.v[static_cast<size_t>(c)] = 1.0 / scale_[static_cast<size_t>(c)];
        shift.v[static_cast<size_t>(c)] = -center_[static_cast<size_t>(c)] / scale_[static_cast<size_t>(c)];
    }
    return tape_.chan_affine(evolving, tape_.leaf(std::move(scl)), tape_.leaf(std::move(shift)));
}

ad::Node* ModelGraph::normalize_rate(ad::Node* f) const {
    const int ne = model_.cfg.n_evolving();
    Tensor scl(ne, 1, 1), shift(ne, 1, 1);
    for (int c = 0; c < ne; ++c)
        scl.v[static_cast<size_t>(c)] = time_scale_ / scale_[static_cast<size_t>(c)];
    return tape_.chan_affine(f, tape_.leaf(std::move(scl)), tape_.leaf(std::move(shift)));
}

ad::Node* ModelGraph::conv_stack(const std::string& prefix, const ConvStackConfig& sc,
                                 ad::Node* input, int out_channels) const {
    ad::Node* x = input;
    auto dims = stack_dims(input->val.c, out_channels, sc);
    for (int l = 0; l < sc.layers; ++l) {
        const auto [cin, cout] = dims[static_cast<size_t>(l)];
        ad::Node* w = leaves_.at(prefix + ".w" + std::to_string(l)).front();
        ad::Node* b = leaves_.at(prefix + ".b" + std::to_string(l)).front();
        x = tape_.conv2d(x, w, b, cout, cin, sc.ksize, sc.ksize);
        if (l + 1 < sc.layers)
            x = sc.activation == Activation::tanh ? tape_.tanh(x) : tape_.relu(x);
    }
    return x;
}

ad::Node* ModelGraph::F(ad::Node* evolving, ad::Node* consts) const {
    const ModelConfig& cfg = model_.cfg;
    if (evolving->val.c != cfg.n_evolving())
        throw ValidationError("model: F input has wrong channel count");
    if (cfg.n_const() > 0 && consts == nullptr)
        throw ValidationError("model: constant channels required but not provided");

    ad::Node* evn = normalize_evolving(evolving);
    ad::Node* input = cfg.n_const() > 0 ? tape_.concat({evn, consts}) : evn;

    // Reaction stacks produce normalized rates; bring them back to field
    // units per second via scale[c] / T.
    auto denorm_rate = [&](ad::Node* r, int c0) {
        Tensor scl(r->val.c, 1, 1), shift(r->val.c, 1, 1);
        for (int c = 0; c < r->val.c; ++c)
            scl.v[static_cast<size_t>(c)] = scale_[static_cast<size_t>(c0 + c)] / time_scale_;
        return tape_.chan_affine(r, tape_.leaf(std::move(scl)), tape_.leaf(std::move(shift)));
    };
    ad::Node* ru = denorm_rate(conv_stack("diff.reaction_u", cfg.reaction, input, 2), 0);
    ad::Node* rx = cfg.n_state() > 0
                       ? denorm_rate(conv_stack("diff.reaction_x", cfg.reaction, input, cfg.n_state()), 2)
                       : nullptr;

    const double dx = grid_.dx;
    ad::Node* un = tape_.slice_channels(evolving, 0, 1);
    ad::Node* vn = tape_.slice_channels(evolving, 1, 2);
    auto advect = [&](ad::Node* q) {
        ad::Node* qx = tape_.deriv_x(q, dx, kBoundary);
        ad::Node* qy = tape_.deriv_y(q, dx, kBoundary);
        return tape_.add(tape_.mul(un, qx), tape_.mul(vn, qy));
    };

    std::vector<ad::Node*> parts;
    parts.reserve(static_cast<size_t>(cfg.n_evolving()));
    for (int c = 0; c < 2; ++c) {
        ad::Node* q = tape_.slice_channels(evolving, c, c + 1);
        ad::Node* fc = tape_.sub(tape_.slice_channels(ru, c, c + 1), advect(q));
        if (cfg.include_diffusion_in_momentum) {
            ad::Node* k = tape_.softplus(leaves_.at("diff.k_mom_raw").front());
            fc = tape_.add(fc, tape_.mul_scalar(tape_.laplacian(q, dx, kBoundary), k));
        }
        parts.push_back(fc);
    }
    for (int s = 0; s < cfg.n_state(); ++s) {
        ad::Node* q = tape_.slice_channels(evolving, 2 + s, 3 + s);
        ad::Node* fc = tape_.slice_channels(rx, s, s + 1);
        if (cfg.include_advection_of_state) fc = tape_.sub(fc, advect(q));
        ad::Node* k = tape_.softplus(leaves_.at("diff.k_raw")[static_cast<size_t>(s)]);
        fc = tape_.add(fc, tape_.mul_scalar(tape_.laplacian(q, dx, kBoundary), k));
        parts.push_back(fc);
    }
    return tape_.concat(parts);
}

ad::Node* ModelGraph::psi(ad::Node* evolving, ad::Node* consts, const IntegratorSpec& spec,
                          ad::Node** f0_out) const {
    return psi_step(tape_, [this, consts](ad::Node* y) { return F(y, consts); }, evolving, spec,
                    f0_out);
}

ad::Node* ModelGraph::normalize_diff(ad::Node* d) const {
    const int ne = model_.cfg.n_evolving();
    Tensor scl(ne, 1, 1), shift(ne, 1, 1);
    for (int c = 0; c < ne; ++c)
        scl.v[static_cast<size_t>(c)] = 1.0 / scale_[static_cast<size_t>(c)];
    return tape_.chan_affine(d, tape_.leaf(std::move(scl)), tape_.leaf(std::move(shift)));
}

ad::Node* ModelGraph::correction_from_normalized(ad::Node* evn, ad::Node* fn) const {
    const ModelConfig& cfg = model_.cfg;
    const int ne = cfg.n_evolving();
    ad::Node* su = conv_stack(
        "corr.correction_u", cfg.correction,
        tape_.concat({tape_.slice_channels(evn, 0, 2), tape_.slice_channels(fn, 0, 2)}), 2);
    if (cfg.n_state() == 0) return su;
    ad::Node* sx = conv_stack(
        "corr.correction_x", cfg.correction,
        tape_.concat({tape_.slice_channels(evn, 2, ne), tape_.slice_channels(fn, 2, ne)}),
        cfg.n_state());
    return tape_.concat({su, sx});
}

ad::Node* ModelGraph::correction_raw(ad::Node* evolving, ad::Node* f0) const {
    return correction_from_normalized(normalize_evolving(evolving), normalize_rate(f0));
}

ad::Node* ModelGraph::correction_phys(ad::Node* evolving, ad::Node* f0) const {
    ad::Node* raw = correction_raw(evolving, f0);
    const int ne = model_.cfg.n_evolving();
    Tensor scl(ne, 1, 1), shift(ne, 1, 1);
    for (int c = 0; c < ne; ++c) scl.v[static_cast<size_t>(c)] = scale_[static_cast<size_t>(c)];
    return tape_.chan_affine(raw, tape_.leaf(std::move(scl)), tape_.leaf(std::move(shift)));
}

GradMap ModelGraph::grads() const {
    GradMap out;
    for (const auto& [name, nodes] : leaves_) {
        if (!model_.params.at(name).trainable) continue;
        bool touched = false;
        for (ad::Node* nd : nodes) touched = touched || !nd->grad.v.empty();
        if (!touched) continue;  // block not part of the differentiated graph
        std::vector<double> acc;
        acc.reserve(model_.params.at(name).count());
        for (ad::Node* nd : nodes) {
            Tensor g = tape_.grad_of(nd);
            acc.insert(acc.end(), g.v.begin(), g.v.end());
        }
        out.emplace(name, std::move(acc));
    }
    return out;
}

namespace {

std::string rate_units(const std::string& base) {
    return base.empty() ? std::string() : base + "/s";
}

Snapshot snapshot_from(const Tensor& t, const Snapshot& like, double t_new) {
    Snapshot out;
    out.t = t_new;
    out.ux = field_from_channel(t, 0, like.grid(), like.ux.units);
    out.uy = field_from_channel(t, 1, like.grid(), like.uy.units);
    out.state_names = like.state_names;
    out.state.reserve(like.state.size());
    for (size_t s = 0; s < like.state.size(); ++s)
        out.state.push_back(
            field_from_channel(t, 2 + static_cast<int>(s), like.grid(), like.state[s].units));
    out.validate();
    return out;
}

}  // namespace

std::vector<Field> differentiate(const Model& m, const Snapshot& s,
                                 const std::vector<double>& consts) {
    ad::Tape tape;
    ModelGraph g(tape, m, s.grid());
    ad::Node* f = g.F(g.evolving_leaf(s), g.consts_node(consts));
    f->val.check_finite("differentiate");
    std::vector<Field> out;
    out.reserve(static_cast<size_t>(f->val.c));
    for (int c = 0; c < f->val.c; ++c)
        out.push_back(field_from_channel(f->val, c, s.grid(), rate_units(s.channel(c).units)));
    return out;
}

Snapshot integrate_step(const Model& m, const Snapshot& s, const std::vector<double>& consts,
                        const IntegratorSpec& spec) {
    if (!(spec.dt > 0.0)) throw ValidationError("integrate_step: dt must be positive");
    ad::Tape tape;
    ModelGraph g(tape, m, s.grid());
    ad::Node* ev = g.evolving_leaf(s);
    ad::Node* cn = g.consts_node(consts);
    ad::Node* f0 = nullptr;
    ad::Node* next = tape.add(ev, g.psi(ev, cn, spec, &f0));
    if (spec.use_correction) next = tape.add(next, g.correction_phys(ev, f0));
    next->val.check_finite("integrate_step");
    return snapshot_from(next->val, s, s.t + spec.dt);
}

Trajectory rollout(const Model& m, const Snapshot& initial, const std::vector<double>& consts,
                   const IntegratorSpec& spec, int n_steps) {
    if (n_steps < 0) throw ValidationError("rollout: step count must be >= 0");
    if (!(spec.dt > 0.0)) throw ValidationError("rollout: dt must be positive");
    Trajectory tr;
    tr.dt = spec.dt;
    tr.snaps.reserve(static_cast<size_t>(n_steps) + 1);
    tr.snaps.push_back(initial);
    for (int k = 1; k <= n_steps; ++k) {
        try {
            Snapshot next = integrate_step(m, tr.snaps.back(), consts, spec);
            next.t = initial.t + k * spec.dt;  // exact spacing, no accumulation
            tr.snaps.push_back(std::move(next));
        } catch (const NumericsError& e) {
            throw NumericsError("rollout: aborted at step " + std::to_string(k) + ": " + e.what());
        }
    }
    tr.validate();
    return tr;
}

}  // namespace parc::model
