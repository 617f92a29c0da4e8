#include "parc/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "parc/autodiff.hpp"

namespace parc::training {

double Dataset::dt() const {
    if (items.empty()) throw ValidationError("Dataset: no items");
    return items.front().traj.dt;
}

void Dataset::validate(const model::ModelConfig& cfg) const {
    cfg.validate();
    if (items.empty()) throw ValidationError("Dataset: no items");
    const Trajectory& first = items.front().traj;
    for (size_t i = 0; i < items.size(); ++i) {
        const DataItem& it = items[i];
        const std::string where = "Dataset item " + std::to_string(i);
        it.traj.validate();
        if (it.traj.size() < 2)
            throw ValidationError(where + ": needs at least two snapshots for pairs");
        if (std::abs(it.traj.dt - first.dt) > 1e-12 * std::max(1.0, std::abs(first.dt)))
            throw ValidationError(where + ": dt differs from the rest of the dataset");
        const Snapshot& s = it.traj.snaps.front();
        if (!s.grid().same_layout(first.snaps.front().grid()))
            throw ValidationError(where + ": grid layout differs from the rest of the dataset");
        if (s.n_channels() != cfg.n_evolving())
            throw ValidationError(where + ": has " + std::to_string(s.n_channels()) +
                                  " channels, model expects " +
                                  std::to_string(cfg.n_evolving()));
        if (s.state_names != cfg.state_names)
            throw ValidationError(where + ": state channel names do not match the model");
        if (static_cast<int>(it.consts.size()) != cfg.n_const())
            throw ValidationError(where + ": expected " + std::to_string(cfg.n_const()) +
                                  " constant values, got " + std::to_string(it.consts.size()));
        for (double c : it.consts)
            if (!std::isfinite(c)) throw ValidationError(where + ": non-finite constant value");
    }
}

model::Normalization compute_normalization(const Dataset& ds, const model::ModelConfig& cfg) {
    ds.validate(cfg);
    const int ne = cfg.n_evolving();
    const int ni = cfg.n_inputs();
    std::vector<double> lo(static_cast<size_t>(ni), std::numeric_limits<double>::infinity());
    std::vector<double> hi(static_cast<size_t>(ni), -std::numeric_limits<double>::infinity());
    for (const DataItem& it : ds.items) {
        for (const Snapshot& s : it.traj.snaps)
            for (int c = 0; c < ne; ++c) {
                const Field& f = s.channel(c);
                for (double v : f.values) {
                    lo[static_cast<size_t>(c)] = std::min(lo[static_cast<size_t>(c)], v);
                    hi[static_cast<size_t>(c)] = std::max(hi[static_cast<size_t>(c)], v);
                }
            }
        for (int k = 0; k < cfg.n_const(); ++k) {
            const double v = it.consts[static_cast<size_t>(k)];
            lo[static_cast<size_t>(ne + k)] = std::min(lo[static_cast<size_t>(ne + k)], v);
            hi[static_cast<size_t>(ne + k)] = std::max(hi[static_cast<size_t>(ne + k)], v);
        }
    }
    model::Normalization norm;
    norm.center.resize(static_cast<size_t>(ni));
    norm.scale.resize(static_cast<size_t>(ni));
    for (int c = 0; c < ni; ++c) {
        const double half = 0.5 * (hi[static_cast<size_t>(c)] - lo[static_cast<size_t>(c)]);
        norm.center[static_cast<size_t>(c)] = 0.5 * (hi[static_cast<size_t>(c)] + lo[static_cast<size_t>(c)]);
        norm.scale[static_cast<size_t>(c)] = half > 0.0 ? half : 1.0;
    }
    norm.time_scale = cfg.time_scale > 0.0 ? cfg.time_scale : ds.dt();
    return norm;
}

std::vector<Pair> all_pairs(const Dataset& ds, const std::vector<int>& item_idx) {
    std::vector<Pair> out;
    for (int i : item_idx) {
        if (i < 0 || i >= ds.n_items()) throw ValidationError("all_pairs: item index out of range");
        const int T = ds.items[static_cast<size_t>(i)].traj.size();
        for (int k = 0; k + 1 < T; ++k) out.push_back({i, k});
    }
    return out;
}

namespace {

model::IntegratorSpec resolve_spec(const model::IntegratorSpec& spec, double data_dt) {
    model::IntegratorSpec out = spec;
    if (out.dt == 0.0)
        out.dt = data_dt;
    else if (std::abs(out.dt - data_dt) > 1e-12 * std::max(1.0, std::abs(data_dt)))
        throw ValidationError("loss: integrator dt does not match the data spacing");
    return out;
}

void require_frozen_differentiator(const ParamStore& params) {
    for (const auto& [name, blk] : params.blocks)
        if (blk.trainable && name.rfind("diff.", 0) == 0)
            throw ContractError("stage2_loss: differentiator block " + name +
                                " is trainable; stage 2 requires it frozen");
}

// Shared teacher-forced batch loss. Stage 1 measures the residual after the
// numerical increment; stage 2 additionally subtracts the learned correction
// (in normalized units, where a zero correction reproduces stage 1 exactly).
double batch_loss(const model::Model& m, const Dataset& ds, const std::vector<Pair>& batch,
                  const model::IntegratorSpec& spec0, int stage, GradMap* grads_out) {
    if (batch.empty()) throw ValidationError("loss: empty batch");
    const auto spec = resolve_spec(spec0, ds.dt());
    const GridSpec& grid = ds.items.front().traj.snaps.front().grid();

    ad::Tape tape;
    model::ModelGraph g(tape, m, grid);
    std::vector<ad::Node*> parts;
    parts.reserve(batch.size());
    for (const Pair& p : batch) {
        if (p.item < 0 || p.item >= ds.n_items())
            throw ValidationError("loss: pair item index out of range");
        const DataItem& it = ds.items[static_cast<size_t>(p.item)];
        if (p.k < 0 || p.k + 1 >= it.traj.size())
            throw ValidationError("loss: pair step index out of range");
        ad::Node* ev = g.evolving_leaf(it.traj.snaps[static_cast<size_t>(p.k)]);
        ad::Node* tgt = g.evolving_leaf(it.traj.snaps[static_cast<size_t>(p.k) + 1]);
        ad::Node* cn = g.consts_node(it.consts);
        ad::Node* f0 = nullptr;
        ad::Node* psi = g.psi(ev, cn, spec, &f0);
        ad::Node* r = g.normalize_diff(tape.sub(tape.sub(tgt, ev), psi));
        if (stage == 2)
            r = tape.sub(r, g.correction_from_normalized(g.normalize_evolving(ev),
                                                         g.normalize_rate(f0)));
        parts.push_back(tape.abs(r));
    }
    ad::Node* loss = tape.mean_all(parts.size() == 1 ? parts.front() : tape.concat(parts));
    if (grads_out) {
        tape.backward(loss);
        *grads_out = g.grads();
    }
    const double value = loss->val.v[0];
    if (!std::isfinite(value)) throw NumericsError("loss: non-finite value");
    return value;
}

}  // namespace

double stage1_loss(const model::Model& m, const Dataset& ds, const std::vector<Pair>& batch,
                   const model::IntegratorSpec& spec, GradMap* grads_out) {
    return batch_loss(m, ds, batch, spec, 1, grads_out);
}

double stage2_loss(const model::Model& m, const Dataset& ds, const std::vector<Pair>& batch,
                   const model::IntegratorSpec& spec, GradMap* grads_out) {
    require_frozen_differentiator(m.params);
    return batch_loss(m, ds, batch, spec, 2, grads_out);
}

void TrainConfig::validate() const {
    if (stage != 1 && stage != 2) throw ValidationError("TrainConfig: stage must be 1 or 2");
    if (epochs < 0) throw ValidationError("TrainConfig: epochs must be >= 0");
    if (batch_size < 1) throw ValidationError("TrainConfig: batch_size must be >= 1");
    if (!(lr0 > 0.0)) throw ValidationError("TrainConfig: lr0 must be positive");
    if (lr_halve_every < 1) throw ValidationError("TrainConfig: lr_halve_every must be >= 1");
    if (!(lr_floor > 0.0)) throw ValidationError("TrainConfig: lr_floor must be positive");
    if (patience < 1) throw ValidationError("TrainConfig: patience must be >= 1");
    if (stop_train_ratio < 0.0 || stop_train_ratio >= 1.0)
        throw ValidationError("TrainConfig: stop_train_ratio must be in [0, 1)");
}

double lr_at(const TrainConfig& cfg, int epoch) {
    if (epoch < 1) epoch = 1;
    const int halvings = (epoch - 1) / cfg.lr_halve_every;
    return std::max(cfg.lr_floor, cfg.lr0 * std::pow(0.5, halvings));
}

std::pair<std::vector<int>, std::vector<int>> split_train_val(int n_items) {
    if (n_items < 1) throw ValidationError("split_train_val: empty dataset");
    if (n_items == 1) return {{0}, {0}};  // degenerate: validate on the only item
    const int n_val = std::max(1, n_items / 10);
    std::vector<int> train, val;
    for (int i = 0; i < n_items - n_val; ++i) train.push_back(i);
    for (int i = n_items - n_val; i < n_items; ++i) val.push_back(i);
    return {train, val};
}

namespace {

// Stage-2 epochs never change the differentiator, so its contribution to
// every pair -- the normalized inputs to the correction and the residual the
// correction must absorb -- is computed once up front. The cached loss builds
// the identical final operations as the uncached one, so values agree bitwise.
struct Stage2Item {
    Tensor evn, fn, r1;
};

std::vector<Stage2Item> build_stage2_cache(const model::Model& m, const Dataset& ds,
                                           const std::vector<Pair>& pairs,
                                           const model::IntegratorSpec& spec) {
    const GridSpec& grid = ds.items.front().traj.snaps.front().grid();
    std::vector<Stage2Item> cache;
    cache.reserve(pairs.size());
    for (const Pair& p : pairs) {
        const DataItem& it = ds.items[static_cast<size_t>(p.item)];
        ad::Tape tape;
        model::ModelGraph g(tape, m, grid);
        ad::Node* ev = g.evolving_leaf(it.traj.snaps[static_cast<size_t>(p.k)]);
        ad::Node* tgt = g.evolving_leaf(it.traj.snaps[static_cast<size_t>(p.k) + 1]);
        ad::Node* f0 = nullptr;
        ad::Node* psi = g.psi(ev, g.consts_node(it.consts), spec, &f0);
        Stage2Item item;
        item.evn = g.normalize_evolving(ev)->val;
        item.fn = g.normalize_rate(f0)->val;
        item.r1 = g.normalize_diff(tape.sub(tape.sub(tgt, ev), psi))->val;
        cache.push_back(std::move(item));
    }
    return cache;
}

double stage2_cached_loss(const model::Model& m, const GridSpec& grid,
                          const std::vector<Stage2Item>& cache, const std::vector<int>& idxs,
                          GradMap* grads_out) {
    ad::Tape tape;
    model::ModelGraph g(tape, m, grid);
    std::vector<ad::Node*> parts;
    parts.reserve(idxs.size());
    for (int i : idxs) {
        const Stage2Item& it = cache[static_cast<size_t>(i)];
        ad::Node* s = g.correction_from_normalized(tape.leaf(it.evn), tape.leaf(it.fn));
        parts.push_back(tape.abs(tape.sub(tape.leaf(it.r1), s)));
    }
    ad::Node* loss = tape.mean_all(parts.size() == 1 ? parts.front() : tape.concat(parts));
    if (grads_out) {
        tape.backward(loss);
        *grads_out = g.grads();
    }
    const double value = loss->val.v[0];
    if (!std::isfinite(value)) throw NumericsError("loss: non-finite value");
    return value;
}

}  // namespace

TrainResult train(model::Model m, const Dataset& ds, const TrainConfig& cfg) {
    cfg.validate();
    ds.validate(m.cfg);
    if (cfg.stage == 2) {
        bool any_corr = false;
        for (const auto& [name, blk] : m.params.blocks)
            if (name.rfind("corr.", 0) == 0) any_corr = true;
        if (!any_corr)
            throw ValidationError("train: stage 2 needs correction blocks in the checkpoint");
        m.params.freeze_prefix("diff.");
        for (auto& [name, blk] : m.params.blocks)
            if (name.rfind("corr.", 0) == 0) blk.trainable = true;
    } else {
        for (auto& [name, blk] : m.params.blocks)
            if (name.rfind("corr.", 0) == 0) blk.trainable = false;
    }

    const auto spec = resolve_spec(cfg.integrator, ds.dt());
    const GridSpec grid = ds.items.front().traj.snaps.front().grid();
    auto [train_items, val_items] = split_train_val(ds.n_items());
    const auto train_pairs = all_pairs(ds, train_items);
    const auto val_pairs = all_pairs(ds, val_items);

    // Stage 2 precomputes the frozen differentiator's contribution per pair;
    // indices below address this combined cache (train first, then val).
    std::vector<Stage2Item> cache;
    if (cfg.stage == 2) {
        std::vector<Pair> all = train_pairs;
        all.insert(all.end(), val_pairs.begin(), val_pairs.end());
        cache = build_stage2_cache(m, ds, all, spec);
    }
    auto run_loss = [&](const std::vector<int>& idxs, const std::vector<Pair>& pairs,
                        GradMap* grads) {
        if (cfg.stage == 2) return stage2_cached_loss(m, grid, cache, idxs, grads);
        std::vector<Pair> batch;
        batch.reserve(idxs.size());
        for (int i : idxs) batch.push_back(pairs[static_cast<size_t>(i)]);
        return batch_loss(m, ds, batch, spec, 1, grads);
    };
    // Mean loss over a pair list, evaluated in batch-size chunks to bound the
    // tape size; every pair carries the same cell count so the weighting by
    // chunk length is exact.
    auto eval_loss = [&](const std::vector<int>& idxs, const std::vector<Pair>& pairs) {
        double acc = 0.0;
        size_t done = 0;
        while (done < idxs.size()) {
            const size_t n = std::min(static_cast<size_t>(cfg.batch_size), idxs.size() - done);
            std::vector<int> chunk(idxs.begin() + static_cast<long>(done),
                                   idxs.begin() + static_cast<long>(done + n));
            acc += run_loss(chunk, pairs, nullptr) * static_cast<double>(n);
            done += n;
        }
        return acc / static_cast<double>(idxs.size());
    };

    std::vector<int> train_idx(train_pairs.size()), val_idx(val_pairs.size());
    for (size_t i = 0; i < train_idx.size(); ++i) train_idx[i] = static_cast<int>(i);
    for (size_t i = 0; i < val_idx.size(); ++i)
        val_idx[i] = static_cast<int>(i + (cfg.stage == 2 ? train_pairs.size() : 0));

    TrainResult res;
    res.adam.step = 0;
    Rng rng(cfg.seed);

    double train0, val0;
    try {
        train0 = eval_loss(train_idx, train_pairs);
        val0 = eval_loss(val_idx, val_pairs);
    } catch (const NumericsError& e) {
        throw NumericsError(std::string("train: pre-training evaluation failed: ") + e.what());
    }
    res.curve.push_back({0, train0, val0, lr_at(cfg, 1)});
    res.best_val = val0;
    res.best_epoch = 0;
    ParamStore best = m.params;

    int since_best = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double lr = lr_at(cfg, epoch);
        std::vector<int> order = train_idx;
        rng.shuffle(order);
        double acc = 0.0;
        size_t done = 0;
        try {
            while (done < order.size()) {
                const size_t n = std::min(static_cast<size_t>(cfg.batch_size), order.size() - done);
                std::vector<int> batch(order.begin() + static_cast<long>(done),
                                       order.begin() + static_cast<long>(done + n));
                GradMap grads;
                const double L = run_loss(batch, train_pairs, &grads);
                adam_step(m.params, grads, res.adam, lr);
                acc += L * static_cast<double>(n);
                done += n;
            }
        } catch (const NumericsError& e) {
            throw NumericsError("train: stage " + std::to_string(cfg.stage) +
                                " aborted at epoch " + std::to_string(epoch) + ": " + e.what());
        }
        const double train_loss = acc / static_cast<double>(order.size());
        const double val_loss = eval_loss(val_idx, val_pairs);
        res.curve.push_back({epoch, train_loss, val_loss, lr});
        res.stopped_epoch = epoch;

        if (val_loss < res.best_val) {
            res.best_val = val_loss;
            res.best_epoch = epoch;
            best = m.params;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
        if (cfg.stop_train_ratio > 0.0 && train0 > 0.0 &&
            train_loss <= cfg.stop_train_ratio * train0)
            break;
    }

    res.model.cfg = m.cfg;
    res.model.params = std::move(best);
    return res;
}

}  // namespace parc::training
