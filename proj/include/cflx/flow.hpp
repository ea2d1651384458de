#pragma once

#include <functional>
#include <vector>

#include "cflx/image.hpp"
#include "cflx/micronet.hpp"
#include "cflx/rng.hpp"

namespace cflx {

// x_t = (1-t) x0 + t eps; target velocity v = eps - x0.
struct NoisySample {
    ImageF x_t;
    double t = 0.0;
    ImageF eps;
    ImageF x0;
};

struct LossValue {
    double value = 0.0;
};

NoisySample noisy_sample(const ImageF& x0, const ImageF& eps, double t);

ImageF gaussian_like(const ImageF& shape_of, Rng& rng);

// Uniform on [0,1].
double sample_t(Rng& rng);

// Mean over elements of (v - v_hat)^2 with v = eps - x0. When d_vhat is
// given, it receives 2 (v_hat - v) / N.
double fm_loss(const ImageF& v_hat, const ImageF& x0, const ImageF& eps,
               ImageF* d_vhat = nullptr);

// Which images feed the prompt encoder for a network loss.
enum class PromptSource {
    PhiPrimeGt,  // frozen encoder on the ground truth (base / structure stages)
    PhiGray,     // trainable encoder on the replicated gray condition
};

// Flow-matching loss through the network; accumulates parameter gradients
// when grads != nullptr. With PromptSource::PhiGray gradients also flow into
// phi through the prompt.
double fm_loss_net(const ModelParams& p, const ImageF& x0, const ImageF& eps,
                   double t, const ImageF& cond, PromptSource prompt_src,
                   double control_scale, bool use_lora, ModelParams* grads);

// ||phi(gray3) - phi'(gt)||^2 summed over embedding dims; gradients flow
// only into phi.
double distill_loss(const ModelParams& p, const ImageF& gray3, const ImageF& gt,
                    ModelParams* grads);

// value = fm + alpha * distill (gradient combination is linear and handled
// by the callers' shared accumulator).
LossValue combined_loss(const LossValue& fm, const LossValue& distill, double alpha);

// fm + alpha * distill through the network in one pass, grads accumulated.
double combined_loss_net(const ModelParams& p, const ImageF& x0, const ImageF& eps,
                         double t, const ImageF& cond, double alpha,
                         double control_scale, ModelParams* grads);

// Euler integration from t=1 to t=0 on a uniform grid; result clamped to [0,1].
ImageF euler_sample_field(const std::function<ImageF(const ImageF&, double)>& velocity,
                          const ImageF& noise, int steps);

ImageF euler_sample(const ModelParams& p, const ImageF& cond,
                    const std::vector<double>& prompt, const ImageF& noise,
                    int steps, double control_scale, bool use_lora);

}  // namespace cflx
