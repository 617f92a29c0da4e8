#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "parc/fields.hpp"
#include "parc/model.hpp"
#include "parc/params.hpp"

namespace parc::training {

// Two-stage training. Stage 1 fits the differentiator through the numerical
// integrator only, minimizing mean |u_{k+1} - u_k - Psi| over teacher-forced
// ground-truth pairs. Stage 2 freezes the differentiator and fits the
// correction networks on the remaining residual, mean |u_{k+1} - u_k - Psi - S|.
// Both losses are evaluated in normalized units so magnitudes are comparable
// across channels and datasets.

// One trajectory plus the values of the model's constant input channels
// (e.g. {1/R} for the Burgers sweep).
struct DataItem {
    Trajectory traj;
    std::vector<double> consts;
};

struct Dataset {
    std::vector<DataItem> items;

    double dt() const;
    int n_items() const { return static_cast<int>(items.size()); }
    // Every trajectory valid, >= 2 snapshots, shared grid layout and dt,
    // channel/const layout matching the model configuration.
    void validate(const model::ModelConfig& cfg) const;
};

// Channel statistics over all items: center = midpoint of [min, max],
// scale = half-range (1 for degenerate channels); constants use their value
// range across items. time_scale = cfg.time_scale, or the dataset dt when 0.
model::Normalization compute_normalization(const Dataset& ds, const model::ModelConfig& cfg);

// Teacher-forced single-step sample: snapshot k is the input, k+1 the target.
struct Pair {
    int item = 0;
    int k = 0;
};
std::vector<Pair> all_pairs(const Dataset& ds, const std::vector<int>& item_idx);

// Losses. A non-null grads_out triggers a backward pass; the map then holds
// exactly the trainable blocks the loss depends on. spec.dt == 0 means "use
// the dataset spacing"; a positive spec.dt must match it.
double stage1_loss(const model::Model& m, const Dataset& ds, const std::vector<Pair>& batch,
                   const model::IntegratorSpec& spec, GradMap* grads_out = nullptr);
// Throws ContractError if any differentiator block is still trainable.
double stage2_loss(const model::Model& m, const Dataset& ds, const std::vector<Pair>& batch,
                   const model::IntegratorSpec& spec, GradMap* grads_out = nullptr);

struct TrainConfig {
    int stage = 1;
    int epochs = 500;
    int batch_size = 8;          // pairs per optimizer step
    double lr0 = 1e-4;           // halved every lr_halve_every epochs
    int lr_halve_every = 100;
    double lr_floor = 1e-6;
    int patience = 50;           // early stop on validation loss
    uint64_t seed = 0;           // shuffling (and nothing else) inside train()
    model::IntegratorSpec integrator;
    // Optional secondary stop: end once train loss <= ratio * initial train
    // loss. 0 disables it. Used by budgeted runs that only need a target drop.
    double stop_train_ratio = 0.0;

    void validate() const;
};

// Learning rate for a 1-based epoch index under the halving schedule.
double lr_at(const TrainConfig& cfg, int epoch);

// Hold out the last max(1, n/10) items for validation.
std::pair<std::vector<int>, std::vector<int>> split_train_val(int n_items);

struct EpochRow {
    int epoch = 0;  // row 0 is the pre-training evaluation
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    model::Model model;           // parameters at the best validation epoch
    AdamState adam;               // optimizer state when training stopped
    std::vector<EpochRow> curve;
    int best_epoch = 0;
    double best_val = 0.0;
    int stopped_epoch = 0;        // last epoch that ran
};

// Runs the configured stage; deterministic given (dataset, config, seed).
// Stage 1 freezes the correction blocks for the run; stage 2 freezes every
// differentiator block, so its bits survive into the result unchanged.
TrainResult train(model::Model m, const Dataset& ds, const TrainConfig& cfg);

}  // namespace parc::training
