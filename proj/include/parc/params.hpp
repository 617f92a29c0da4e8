#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "parc/errors.hpp"

namespace parc {

// One named parameter tensor. Shapes are informational (checkpoint layout and
// conv dimensions); the optimizer and gradients treat blocks as flat arrays.
struct ParamBlock {
    std::vector<double> v;
    std::vector<int> shape;
    bool trainable = true;

    size_t count() const { return v.size(); }
};

// Ordered (by name) collection of parameter blocks. Iteration order is the
// map order, which makes every pass over the store deterministic.
struct ParamStore {
    std::map<std::string, ParamBlock> blocks;

    bool has(const std::string& name) const { return blocks.count(name) != 0; }

    ParamBlock& at(const std::string& name) {
        auto it = blocks.find(name);
        if (it == blocks.end()) throw ValidationError("ParamStore: no block named " + name);
        return it->second;
    }
    const ParamBlock& at(const std::string& name) const {
        auto it = blocks.find(name);
        if (it == blocks.end()) throw ValidationError("ParamStore: no block named " + name);
        return it->second;
    }

    void add(const std::string& name, ParamBlock block) {
        if (has(name)) throw ValidationError("ParamStore: duplicate block " + name);
        blocks.emplace(name, std::move(block));
    }

    // Marks every block whose name starts with `prefix` as frozen.
    void freeze_prefix(const std::string& prefix) {
        for (auto& [name, block] : blocks)
            if (name.rfind(prefix, 0) == 0) block.trainable = false;
    }

    size_t total_count() const {
        size_t n = 0;
        for (const auto& [name, block] : blocks) n += block.count();
        return n;
    }
};

using GradMap = std::map<std::string, std::vector<double>>;

// FNV-1a over the names, shapes, and raw value bits of blocks selected by
// `pred`; used for checkpoint config digests and the stage-1 freeze contract.
uint64_t digest_params(const ParamStore& params,
                       const std::function<bool(const std::string&)>& pred);
uint64_t fnv1a(const void* data, size_t len, uint64_t seed = 14695981039346656037ull);

// Adam with bias correction; beta/epsilon defaults per the training protocol.
struct AdamState {
    struct Moments {
        std::vector<double> m, v;
    };
    std::map<std::string, Moments> moments;
    int64_t step = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

// One optimizer step over every trainable block present in `grads`.
// Gradient entries must match existing trainable blocks in size.
void adam_step(ParamStore& params, const GradMap& grads, AdamState& state, double lr);

// Central finite-difference verification of analytic gradients. `loss`
// re-evaluates the forward pass for perturbed parameters. The relative error
// denominator is floored by the finite-difference noise scale so that
// near-zero gradients of an O(1) loss do not produce spurious failures.
struct GradCheckBlock {
    std::string name;
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    size_t checked = 0;
};

struct GradCheckReport {
    std::vector<GradCheckBlock> blocks;
    double max_rel_err = 0.0;
    double tolerance = 0.0;

    bool pass() const { return max_rel_err <= tolerance; }
};

GradCheckReport grad_check(const std::function<double(const ParamStore&)>& loss,
                           const ParamStore& params, const GradMap& analytic, double tolerance,
                           double h = 1e-6);

}  // namespace parc
