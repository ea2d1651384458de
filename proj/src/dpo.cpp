#include "cflx/dpo.hpp"

#include <cmath>
#include <stdexcept>

namespace cflx {

double softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

double beta_t(const DpoConfig& cfg, double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("beta_t: t out of [0,1]");
    if (cfg.beta_mode == BetaMode::Quadratic) return cfg.beta * (1.0 - t) * (1.0 - t);
    return cfg.beta;
}

namespace {

// Sum-of-squares velocity error and its gradient scale bookkeeping.
double velocity_err(const ImageF& v_hat, const ImageF& x0, const ImageF& eps) {
    double acc = 0.0;
    for (std::size_t i = 0; i < v_hat.data.size(); ++i) {
        const double d = (eps.data[i] - x0.data[i]) - v_hat.data[i];
        acc += d * d;
    }
    return acc;
}

ImageF velocity_err_grad(const ImageF& v_hat, const ImageF& x0, const ImageF& eps,
                         double scale) {
    ImageF g(v_hat.width, v_hat.height, v_hat.channels);
    for (std::size_t i = 0; i < v_hat.data.size(); ++i)
        g.data[i] = scale * 2.0 * (v_hat.data[i] - (eps.data[i] - x0.data[i]));
    return g;
}

}  // namespace

double dpo_loss(const ModelParams& policy, const ModelParams& ref,
                const Triplet& triplet, double t, const ImageF& eps_w,
                const ImageF& eps_l, const DpoConfig& cfg, double control_scale,
                ModelParams* policy_grads) {
    const ImageF x0w = to_float(triplet.winner);
    const ImageF x0l = to_float(triplet.loser);
    const ImageF cond = to_float(triplet.condition);
    if (x0w.data.size() != eps_w.data.size() || x0l.data.size() != eps_l.data.size())
        throw std::invalid_argument("dpo_loss: shape mismatch");

    // Inference-time information flow: both prompts from phi on the condition.
    const std::vector<double> prompt = prompt_encode(policy.phi, policy.cfg, replicate3(cond));

    const NoisySample nw = noisy_sample(x0w, eps_w, t);
    const NoisySample nl = noisy_sample(x0l, eps_l, t);

    NetTraceBox trace_w, trace_l;
    const ImageF v_pw = net_forward(policy, nw.x_t, t, cond, prompt, control_scale,
                                    /*use_lora=*/true, policy_grads ? &trace_w : nullptr);
    const ImageF v_pl = net_forward(policy, nl.x_t, t, cond, prompt, control_scale,
                                    /*use_lora=*/true, policy_grads ? &trace_l : nullptr);
    const std::vector<double> prompt_ref =
        prompt_encode(ref.phi, ref.cfg, replicate3(cond));
    const ImageF v_rw = net_forward(ref, nw.x_t, t, cond, prompt_ref, control_scale, false);
    const ImageF v_rl = net_forward(ref, nl.x_t, t, cond, prompt_ref, control_scale, false);

    const double bt = beta_t(cfg, t);
    const double z = (bt / 2.0) * ((velocity_err(v_pw, x0w, eps_w) - velocity_err(v_rw, x0w, eps_w)) -
                                   (velocity_err(v_pl, x0l, eps_l) - velocity_err(v_rl, x0l, eps_l)));
    if (!std::isfinite(z))
        throw std::runtime_error("dpo_loss: non-finite inner term");
    const double loss = softplus(z);  // = -log sigma(-z)

    if (policy_grads) {
        const double sig = 1.0 / (1.0 + std::exp(-z));  // dloss/dz
        const ImageF d_vw = velocity_err_grad(v_pw, x0w, eps_w, sig * bt / 2.0);
        const ImageF d_vl = velocity_err_grad(v_pl, x0l, eps_l, -sig * bt / 2.0);
        net_backward(policy, trace_w, d_vw, *policy_grads);
        net_backward(policy, trace_l, d_vl, *policy_grads);
    }
    return loss;
}

double sft_loss(const ModelParams& policy, const Triplet& triplet, double t,
                const ImageF& eps, double control_scale, ModelParams* grads) {
    return fm_loss_net(policy, to_float(triplet.winner), eps, t,
                       to_float(triplet.condition), PromptSource::PhiGray,
                       control_scale, /*use_lora=*/true, grads);
}

std::array<StageConfig, 2> pro_dpo_schedule(const DpoConfig& cfg) {
    if (!(cfg.beta > 0.0)) throw std::invalid_argument("pro_dpo_schedule: beta must be > 0");
    cfg.stage1.range.validate();
    cfg.stage2.range.validate();
    if (cfg.stage1.range.lo > cfg.stage2.range.lo ||
        cfg.stage1.range.hi > cfg.stage2.range.hi)
        throw std::invalid_argument("pro_dpo_schedule: stage 2 must be milder than stage 1");
    return {cfg.stage1, cfg.stage2};
}

}  // namespace cflx
