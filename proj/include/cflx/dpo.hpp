#pragma once

#include <array>

#include "cflx/flow.hpp"
#include "cflx/micronet.hpp"
#include "cflx/pref_data.hpp"

namespace cflx {

enum class BetaMode { Constant, Quadratic };

struct StageConfig {
    AugRange range;
    double learning_rate = 4e-5;
    int epochs = 2;
    int batch_size = 16;
};

struct DpoConfig {
    double beta = 1000.0;
    BetaMode beta_mode = BetaMode::Constant;
    int lora_rank = 4;
    StageConfig stage1{{0.5, 0.8}, 4e-5, 2, 16};
    StageConfig stage2{{0.75, 0.95}, 1e-5, 2, 16};
};

// Quadratic mode: beta (1-t)^2; constant mode: beta.
double beta_t(const DpoConfig& cfg, double t);

// Flow-matching DPO loss: -log sigma(-(beta_t/2) * [winner advantage]),
// norms as elementwise sums, shared t, independent noise per branch.
// Gradients are accumulated into policy_grads (lora only by construction of
// the training stages; the full gradient is computed and masked by callers).
// Prompt embeddings for both branches come from the policy's phi applied to
// the condition, treated as constant under the trainable lora group.
double dpo_loss(const ModelParams& policy, const ModelParams& ref,
                const Triplet& triplet, double t, const ImageF& eps_w,
                const ImageF& eps_l, const DpoConfig& cfg, double control_scale,
                ModelParams* policy_grads);

// SFT baseline: fm loss on (condition, winner) pairs, lora trainable.
double sft_loss(const ModelParams& policy, const Triplet& triplet, double t,
                const ImageF& eps, double control_scale, ModelParams* grads);

// Stage 1 strong augmentations, stage 2 milder range with lower lr.
std::array<StageConfig, 2> pro_dpo_schedule(const DpoConfig& cfg);

// Stable softplus: log(1 + e^x).
double softplus(double x);

}  // namespace cflx
