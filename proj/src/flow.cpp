#include "cflx/flow.hpp"

#include <cmath>
#include <stdexcept>

#include "cflx/simd.hpp"

namespace cflx {

NoisySample noisy_sample(const ImageF& x0, const ImageF& eps, double t) {
    if (x0.width != eps.width || x0.height != eps.height || x0.channels != eps.channels)
        throw std::invalid_argument("noisy_sample: shape mismatch");
    if (!(t >= 0.0 && t <= 1.0))
        throw std::invalid_argument("noisy_sample: t out of [0,1]");
    NoisySample s;
    s.t = t;
    s.x0 = x0;
    s.eps = eps;
    s.x_t = ImageF(x0.width, x0.height, x0.channels);
    for (std::size_t i = 0; i < x0.data.size(); ++i)
        s.x_t.data[i] = (1.0 - t) * x0.data[i] + t * eps.data[i];
    return s;
}

ImageF gaussian_like(const ImageF& shape_of, Rng& rng) {
    ImageF out(shape_of.width, shape_of.height, shape_of.channels);
    for (double& v : out.data) v = rng.normal();
    return out;
}

double sample_t(Rng& rng) { return rng.uniform(); }

double fm_loss(const ImageF& v_hat, const ImageF& x0, const ImageF& eps, ImageF* d_vhat) {
    if (v_hat.data.size() != x0.data.size() || x0.data.size() != eps.data.size())
        throw std::invalid_argument("fm_loss: shape mismatch");
    const std::size_t n = v_hat.data.size();
    double acc = 0.0;
    if (d_vhat) *d_vhat = ImageF(v_hat.width, v_hat.height, v_hat.channels);
    for (std::size_t i = 0; i < n; ++i) {
        const double v = eps.data[i] - x0.data[i];
        const double d = v_hat.data[i] - v;
        acc += d * d;
        if (d_vhat) d_vhat->data[i] = 2.0 * d / static_cast<double>(n);
    }
    return acc / static_cast<double>(n);
}

double fm_loss_net(const ModelParams& p, const ImageF& x0, const ImageF& eps,
                   double t, const ImageF& cond, PromptSource prompt_src,
                   double control_scale, bool use_lora, ModelParams* grads) {
    const NoisySample ns = noisy_sample(x0, eps, t);

    const Encoder& enc = prompt_src == PromptSource::PhiPrimeGt ? p.phi_prime : p.phi;
    const ImageF enc_input = prompt_src == PromptSource::PhiPrimeGt ? x0 : replicate3(cond);

    EncTraceBox enc_trace;
    const std::vector<double> prompt = grads
        ? prompt_encode(enc, p.cfg, enc_input, enc_trace)
        : prompt_encode(enc, p.cfg, enc_input);

    NetTraceBox trace;
    const ImageF v_hat = net_forward(p, ns.x_t, t, cond, prompt, control_scale,
                                     use_lora, grads ? &trace : nullptr);
    ImageF d_vhat;
    const double loss = fm_loss(v_hat, x0, eps, grads ? &d_vhat : nullptr);
    if (grads) {
        InputGrads ig;
        net_backward(p, trace, d_vhat, *grads, &ig);
        Encoder& enc_grads = prompt_src == PromptSource::PhiPrimeGt
                                 ? grads->phi_prime
                                 : grads->phi;
        prompt_encode_backward(enc, p.cfg, enc_trace, ig.d_prompt, enc_grads);
    }
    return loss;
}

double distill_loss(const ModelParams& p, const ImageF& gray3, const ImageF& gt,
                    ModelParams* grads) {
    EncTraceBox trace;
    const std::vector<double> e = grads
        ? prompt_encode(p.phi, p.cfg, gray3, trace)
        : prompt_encode(p.phi, p.cfg, gray3);
    const std::vector<double> e_ref = prompt_encode(p.phi_prime, p.cfg, gt);
    double acc = 0.0;
    std::vector<double> d_e(e.size());
    for (std::size_t i = 0; i < e.size(); ++i) {
        const double d = e[i] - e_ref[i];
        acc += d * d;
        d_e[i] = 2.0 * d;
    }
    if (grads) prompt_encode_backward(p.phi, p.cfg, trace, d_e, grads->phi);
    return acc;
}

LossValue combined_loss(const LossValue& fm, const LossValue& distill, double alpha) {
    if (alpha < 0.0) throw std::invalid_argument("combined_loss: alpha must be >= 0");
    return {fm.value + alpha * distill.value};
}

double combined_loss_net(const ModelParams& p, const ImageF& x0, const ImageF& eps,
                         double t, const ImageF& cond, double alpha,
                         double control_scale, ModelParams* grads) {
    const double fm = fm_loss_net(p, x0, eps, t, cond, PromptSource::PhiGray,
                                  control_scale, /*use_lora=*/false, grads);
    ModelParams dgrads = grads ? zeros_like(p) : ModelParams{};
    const double ds = distill_loss(p, replicate3(cond), x0, grads ? &dgrads : nullptr);
    if (grads) {
        const auto& kr = simd::active();
        kr.axpy(alpha, dgrads.phi.conv1.w.ptr(), grads->phi.conv1.w.ptr(),
                dgrads.phi.conv1.w.numel());
        kr.axpy(alpha, dgrads.phi.conv1.b.ptr(), grads->phi.conv1.b.ptr(),
                dgrads.phi.conv1.b.numel());
        kr.axpy(alpha, dgrads.phi.conv2.w.ptr(), grads->phi.conv2.w.ptr(),
                dgrads.phi.conv2.w.numel());
        kr.axpy(alpha, dgrads.phi.conv2.b.ptr(), grads->phi.conv2.b.ptr(),
                dgrads.phi.conv2.b.numel());
        kr.axpy(alpha, dgrads.phi.fc.w.ptr(), grads->phi.fc.w.ptr(),
                dgrads.phi.fc.w.numel());
        kr.axpy(alpha, dgrads.phi.fc.b.ptr(), grads->phi.fc.b.ptr(),
                dgrads.phi.fc.b.numel());
    }
    return fm + alpha * ds;
}

ImageF euler_sample_field(const std::function<ImageF(const ImageF&, double)>& velocity,
                          const ImageF& noise, int steps) {
    if (steps < 1) throw std::invalid_argument("euler_sample: steps >= 1 required");
    ImageF x = noise;
    const double dt = 1.0 / steps;
    for (int k = steps; k >= 1; --k) {
        const double t = static_cast<double>(k) / steps;
        const ImageF v = velocity(x, t);
        for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] -= dt * v.data[i];
    }
    for (double& v : x.data) v = std::min(1.0, std::max(0.0, v));
    return x;
}

ImageF euler_sample(const ModelParams& p, const ImageF& cond,
                    const std::vector<double>& prompt, const ImageF& noise,
                    int steps, double control_scale, bool use_lora) {
    return euler_sample_field(
        [&](const ImageF& x, double t) {
            return net_forward(p, x, t, cond, prompt, control_scale, use_lora);
        },
        noise, steps);
}

}  // namespace cflx
