#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "parc/autodiff.hpp"
#include "parc/fields.hpp"
#include "parc/params.hpp"
#include "parc/rng.hpp"

namespace parc::model {

// The network estimates F = d(fields)/dt with hard-wired advection and
// diffusion branches plus learned reaction stacks,
//   F_u = -(u.grad)u + R_u(x, u, c)          (momentum channels)
//   F_x = -(u.grad)x + k lap(x) + R_x(x, u, c)  (state channels)
// and steps fields forward with numerical quadrature Psi plus an optional
// learned correction S, u_{k+1} = u_k + Psi + S(u_k, F_u).

enum class Scheme { heun, rk4 };
enum class Activation { tanh, relu };

struct IntegratorSpec {
    Scheme scheme = Scheme::heun;
    double dt = 0.0;  // 0 means "take the trajectory spacing" where data exists
    bool use_correction = false;
};

struct ConvStackConfig {
    int layers = 4;
    int hidden = 48;
    int ksize = 3;
    Activation activation = Activation::tanh;
};

struct ModelConfig {
    std::vector<std::string> state_names;  // channels beyond the two velocities
    std::vector<std::string> const_names;  // broadcast constant inputs, e.g. inv_R
    ConvStackConfig reaction{4, 48, 3, Activation::tanh};
    ConvStackConfig correction{3, 32, 3, Activation::tanh};
    double diffusivity_init = 0.0;   // per-state-channel k at initialization
    bool freeze_diffusivity = false; // keep k at diffusivity_init (not trained)
    bool include_diffusion_in_momentum = false;  // adds k_mom lap(u) to F_u
    bool include_advection_of_state = true;      // -(u.grad)x on state channels
    double time_scale = 0.0;  // rate normalization T; 0 means "dataset dt"

    int n_state() const { return static_cast<int>(state_names.size()); }
    int n_const() const { return static_cast<int>(const_names.size()); }
    int n_evolving() const { return 2 + n_state(); }
    int n_inputs() const { return n_evolving() + n_const(); }
    void validate() const;
};

// Canonical text form of the architecture-relevant settings; its FNV-1a hash
// is the checkpoint's config digest.
std::string canonical_config(const ModelConfig& cfg);
uint64_t config_digest(const ModelConfig& cfg);

// Per-input-channel affine normalization to about [-1, 1], plus the time
// scale used to normalize rate fields (F*T/scale). Stored in the parameter
// store as frozen blocks so checkpoints are self-contained.
struct Normalization {
    std::vector<double> center, scale;  // sized n_inputs()
    double time_scale = 1.0;
};
Normalization identity_normalization(const ModelConfig& cfg);

struct Model {
    ModelConfig cfg;
    ParamStore params;
};

// Fresh parameters: conv kernels drawn uniform in +-1/sqrt(fan_in), biases
// zero, correction final layers exactly zero (so S == 0 at the stage-2 start),
// diffusivities stored through a softplus preimage, normalization frozen.
// Draw order is fixed, so a seed fully determines the parameters.
ParamStore init_params(const ModelConfig& cfg, const Normalization& norm, Rng& rng);

// Quadrature increment Psi built on graph nodes; F is re-invoked on the
// intermediate states, so gradients flow through every stage. If f0_out is
// given it receives F evaluated at y0 (the correction stack's second input).
ad::Node* psi_step(ad::Tape& tape, const std::function<ad::Node*(ad::Node*)>& F, ad::Node* y0,
                   const IntegratorSpec& spec, ad::Node** f0_out = nullptr);

// Builds the differentiable model graph on a tape. Parameter blocks become
// leaves whose needs_grad mirrors block.trainable; grads() gathers leaf
// gradients back under the block names after a backward pass.
class ModelGraph {
public:
    ModelGraph(ad::Tape& tape, const Model& m, const GridSpec& grid);

    ad::Node* evolving_leaf(const Snapshot& s) const;
    ad::Node* evolving_leaf(Tensor t) const;
    ad::Node* consts_node(const std::vector<double>& consts) const;  // normalized

    ad::Node* F(ad::Node* evolving, ad::Node* consts) const;  // physical d/dt
    ad::Node* psi(ad::Node* evolving, ad::Node* consts, const IntegratorSpec& spec,
                  ad::Node** f0_out = nullptr) const;

    ad::Node* normalize_evolving(ad::Node* evolving) const;
    ad::Node* normalize_rate(ad::Node* f) const;
    ad::Node* normalize_diff(ad::Node* d) const;  // per-channel 1/scale, no shift
    ad::Node* correction_raw(ad::Node* evolving, ad::Node* f0) const;   // normalized S
    ad::Node* correction_phys(ad::Node* evolving, ad::Node* f0) const;  // field units
    // Correction stacks on already-normalized fields and rates; the basis for
    // stage-2 batches where the frozen differentiator outputs are precomputed.
    ad::Node* correction_from_normalized(ad::Node* evn, ad::Node* fn) const;

    GradMap grads() const;  // trainable blocks touched by the last backward

private:
    ad::Node* conv_stack(const std::string& prefix, const ConvStackConfig& sc, ad::Node* input,
                         int out_channels) const;

    ad::Tape& tape_;
    const Model& model_;
    GridSpec grid_;
    std::map<std::string, std::vector<ad::Node*>> leaves_;  // block -> leaf list
    std::vector<double> center_, scale_;
    double time_scale_ = 1.0;
};

// Inference wrappers (no gradients retained).
std::vector<Field> differentiate(const Model& m, const Snapshot& s,
                                 const std::vector<double>& consts);
Snapshot integrate_step(const Model& m, const Snapshot& s, const std::vector<double>& consts,
                        const IntegratorSpec& spec);
Trajectory rollout(const Model& m, const Snapshot& initial, const std::vector<double>& consts,
                   const IntegratorSpec& spec, int n_steps);

}  // namespace parc::model
