#include "cflx/micronet.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>

#include "cflx/simd.hpp"

namespace cflx {
namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

Conv make_conv(int in_ch, int out_ch, int k) {
    Conv c;
    c.in_ch = in_ch;
    c.out_ch = out_ch;
    c.k = k;
    c.w = Tensor({out_ch, in_ch, k, k});
    c.b = Tensor({out_ch});
    return c;
}

Linear make_linear(int in_dim, int out_dim) {
    Linear l;
    l.in_dim = in_dim;
    l.out_dim = out_dim;
    l.w = Tensor({out_dim, in_dim});
    l.b = Tensor({out_dim});
    return l;
}

void he_init(Conv& c, Rng& rng) {
    const double limit = std::sqrt(6.0 / (c.in_ch * c.k * c.k));
    fill_uniform(c.w, rng, -limit, limit);
}

void he_init(Linear& l, Rng& rng) {
    const double limit = std::sqrt(6.0 / l.in_dim);
    fill_uniform(l.w, rng, -limit, limit);
}

// Allocates the full parameter set with all tensors zeroed.
ModelParams make_params(const NetConfig& cfg) {
    ModelParams p;
    p.cfg = cfg;
    const int ch = cfg.channels;
    p.trunk.stem = make_conv(3, ch, 3);
    for (int i = 0; i < cfg.depth; ++i) {
        TrunkBlock b;
        b.conv = make_conv(ch, ch, 3);
        b.film = make_linear(cfg.time_dim + cfg.d_p, 2 * ch);
        p.trunk.blocks.push_back(std::move(b));
    }
    p.trunk.head = make_conv(ch, 3, 3);
    p.control.stem = make_conv(1, ch, 3);
    for (int i = 0; i < cfg.depth; ++i) {
        ControlBlock b;
        b.conv = make_conv(ch, ch, 3);
        b.proj = make_conv(ch, ch, 1);
        p.control.blocks.push_back(std::move(b));
    }
    p.phi.conv1 = make_conv(3, ch, 3);
    p.phi.conv2 = make_conv(ch, ch, 3);
    p.phi.fc = make_linear(ch, cfg.d_p);
    p.phi_prime = p.phi;
    for (int i = 0; i < cfg.depth; ++i) {
        LoraPair lp;
        lp.a = Tensor({cfg.lora_rank, ch * 9});
        lp.b = Tensor({ch, cfg.lora_rank});
        p.lora.push_back(std::move(lp));
    }
    return p;
}

// Effective trunk block conv weight: W + (s/r) * B * A.
Tensor effective_weight(const ModelParams& p, int block, bool use_lora) {
    Tensor w = p.trunk.blocks[block].conv.w;
    if (!use_lora) return w;
    const auto& kr = simd::active();
    const LoraPair& lp = p.lora[block];
    const int rank = p.cfg.lora_rank;
    const int cols = p.cfg.channels * 9;
    const double f = p.cfg.lora_factor();
    for (int oc = 0; oc < p.cfg.channels; ++oc)
        for (int r = 0; r < rank; ++r)
            kr.axpy(f * lp.b.data[oc * rank + r], lp.a.ptr() + r * cols,
                    w.ptr() + static_cast<std::size_t>(oc) * cols, cols);
    return w;
}

void linear_fwd(const Linear& l, const double* in, double* out) {
    const auto& kr = simd::active();
    for (int o = 0; o < l.out_dim; ++o)
        out[o] = l.b.data[o] + kr.dot(l.w.ptr() + static_cast<std::size_t>(o) * l.in_dim,
                                      in, l.in_dim);
}

void linear_bwd(const Linear& l, const double* in, const double* d_out,
                Linear& grads, double* d_in) {
    const auto& kr = simd::active();
    for (int o = 0; o < l.out_dim; ++o) {
        grads.b.data[o] += d_out[o];
        kr.axpy(d_out[o], in, grads.w.ptr() + static_cast<std::size_t>(o) * l.in_dim,
                l.in_dim);
        if (d_in)
            kr.axpy(d_out[o], l.w.ptr() + static_cast<std::size_t>(o) * l.in_dim,
                    d_in, l.in_dim);
    }
}

void silu_inplace(std::vector<double>& v) {
    for (double& x : v) x = silu(x);
}

}  // namespace

bool GroupMask::get(ParamGroup g) const {
    switch (g) {
        case ParamGroup::Trunk: return trunk;
        case ParamGroup::Control: return control;
        case ParamGroup::Phi: return phi;
        case ParamGroup::PhiPrime: return phi_prime;
        case ParamGroup::Lora: return lora;
    }
    return false;
}

GroupMask GroupMask::all() { return {true, true, true, true, true}; }

GroupMask GroupMask::only(ParamGroup g) {
    GroupMask m;
    switch (g) {
        case ParamGroup::Trunk: m.trunk = true; break;
        case ParamGroup::Control: m.control = true; break;
        case ParamGroup::Phi: m.phi = true; break;
        case ParamGroup::PhiPrime: m.phi_prime = true; break;
        case ParamGroup::Lora: m.lora = true; break;
    }
    return m;
}

ModelParams init_params(const NetConfig& cfg, std::uint64_t seed) {
    if (cfg.image_size < 1 || cfg.channels < 1 || cfg.depth < 1 || cfg.d_p < 1 ||
        cfg.lora_rank < 1 || cfg.time_dim < 2 || cfg.time_dim % 2 != 0)
        throw std::invalid_argument("init_params: invalid NetConfig");
    if (cfg.lora_rank > cfg.channels)
        throw std::invalid_argument("init_params: lora_rank exceeds channel width");
    ModelParams p = make_params(cfg);
    Rng rng = Rng::stream(seed, "init");
    he_init(p.trunk.stem, rng);
    for (auto& b : p.trunk.blocks) {
        he_init(b.conv, rng);
        he_init(b.film, rng);
    }
    he_init(p.trunk.head, rng);
    he_init(p.control.stem, rng);
    for (int i = 0; i < cfg.depth; ++i) {
        p.control.blocks[i].conv = p.trunk.blocks[i].conv;  // ControlNet copy
        // output projections stay exactly zero
    }
    he_init(p.phi.conv1, rng);
    he_init(p.phi.conv2, rng);
    he_init(p.phi.fc, rng);
    p.phi_prime = p.phi;
    for (auto& lp : p.lora) {
        const double limit = std::sqrt(6.0 / lp.a.shape[1]);
        fill_uniform(lp.a, rng, -limit, limit);
        // b stays zero: adapters start as the identity delta
    }
    return p;
}

ModelParams zeros_like(const ModelParams& p) {
    ModelParams z = make_params(p.cfg);
    return z;
}

namespace {

template <class P, class Fn>
void visit_impl(P& p, const Fn& fn) {
    fn(ParamGroup::Trunk, "trunk.stem.w", p.trunk.stem.w);
    fn(ParamGroup::Trunk, "trunk.stem.b", p.trunk.stem.b);
    for (std::size_t i = 0; i < p.trunk.blocks.size(); ++i) {
        const std::string base = "trunk.block" + std::to_string(i);
        fn(ParamGroup::Trunk, base + ".conv.w", p.trunk.blocks[i].conv.w);
        fn(ParamGroup::Trunk, base + ".conv.b", p.trunk.blocks[i].conv.b);
        fn(ParamGroup::Trunk, base + ".film.w", p.trunk.blocks[i].film.w);
        fn(ParamGroup::Trunk, base + ".film.b", p.trunk.blocks[i].film.b);
    }
    fn(ParamGroup::Trunk, "trunk.head.w", p.trunk.head.w);
    fn(ParamGroup::Trunk, "trunk.head.b", p.trunk.head.b);
    fn(ParamGroup::Control, "control.stem.w", p.control.stem.w);
    fn(ParamGroup::Control, "control.stem.b", p.control.stem.b);
    for (std::size_t i = 0; i < p.control.blocks.size(); ++i) {
        const std::string base = "control.block" + std::to_string(i);
        fn(ParamGroup::Control, base + ".conv.w", p.control.blocks[i].conv.w);
        fn(ParamGroup::Control, base + ".conv.b", p.control.blocks[i].conv.b);
        fn(ParamGroup::Control, base + ".proj.w", p.control.blocks[i].proj.w);
        fn(ParamGroup::Control, base + ".proj.b", p.control.blocks[i].proj.b);
    }
    fn(ParamGroup::Phi, "phi.conv1.w", p.phi.conv1.w);
    fn(ParamGroup::Phi, "phi.conv1.b", p.phi.conv1.b);
    fn(ParamGroup::Phi, "phi.conv2.w", p.phi.conv2.w);
    fn(ParamGroup::Phi, "phi.conv2.b", p.phi.conv2.b);
    fn(ParamGroup::Phi, "phi.fc.w", p.phi.fc.w);
    fn(ParamGroup::Phi, "phi.fc.b", p.phi.fc.b);
    fn(ParamGroup::PhiPrime, "phi_prime.conv1.w", p.phi_prime.conv1.w);
    fn(ParamGroup::PhiPrime, "phi_prime.conv1.b", p.phi_prime.conv1.b);
    fn(ParamGroup::PhiPrime, "phi_prime.conv2.w", p.phi_prime.conv2.w);
    fn(ParamGroup::PhiPrime, "phi_prime.conv2.b", p.phi_prime.conv2.b);
    fn(ParamGroup::PhiPrime, "phi_prime.fc.w", p.phi_prime.fc.w);
    fn(ParamGroup::PhiPrime, "phi_prime.fc.b", p.phi_prime.fc.b);
    for (std::size_t i = 0; i < p.lora.size(); ++i) {
        const std::string base = "lora" + std::to_string(i);
        fn(ParamGroup::Lora, base + ".a", p.lora[i].a);
        fn(ParamGroup::Lora, base + ".b", p.lora[i].b);
    }
}

}  // namespace

void visit_params(ModelParams& p,
                  const std::function<void(ParamGroup, const std::string&, Tensor&)>& fn) {
    visit_impl(p, fn);
}

void visit_params(const ModelParams& p,
                  const std::function<void(ParamGroup, const std::string&, const Tensor&)>& fn) {
    visit_impl(p, fn);
}

void mask_grads(ModelParams& grads, const GroupMask& trainable) {
    visit_params(grads, [&](ParamGroup g, const std::string&, Tensor& t) {
        if (!trainable.get(g)) t.zero();
    });
}

std::vector<double> time_embed(double t, int time_dim) {
    const int half = time_dim / 2;
    std::vector<double> emb(time_dim);
    for (int i = 0; i < half; ++i) {
        const double freq = std::pow(10000.0, -static_cast<double>(i) / half);
        const double arg = 100.0 * t * freq;
        emb[i] = std::sin(arg);
        emb[half + i] = std::cos(arg);
    }
    return emb;
}

// --- prompt encoder ---------------------------------------------------------

struct EncTrace {
    std::vector<double> input;     // [3][S][S]
    std::vector<double> e1_pre, e2_pre;  // conv outputs before SiLU
    std::vector<double> e1, e2;
    std::vector<double> pooled;  // [Ch]
    int size = 0;
};

EncTraceBox::EncTraceBox() : t(new EncTrace) {}
EncTraceBox::~EncTraceBox() { delete t; }
EncTraceBox::EncTraceBox(EncTraceBox&& o) noexcept : t(o.t) { o.t = nullptr; }

ImageF replicate3(const ImageF& gray) {
    if (gray.channels != 1)
        throw std::invalid_argument("replicate3: 1-channel input required");
    ImageF out(gray.width, gray.height, 3);
    for (int y = 0; y < gray.height; ++y)
        for (int x = 0; x < gray.width; ++x)
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = gray.at(x, y, 0);
    return out;
}

namespace {

// ImageF is interleaved; the network works on planar buffers.
std::vector<double> to_planar(const ImageF& img) {
    const std::size_t plane = static_cast<std::size_t>(img.width) * img.height;
    std::vector<double> out(plane * img.channels);
    for (int c = 0; c < img.channels; ++c)
        for (std::size_t i = 0; i < plane; ++i)
            out[c * plane + i] = img.data[i * img.channels + c];
    return out;
}

ImageF from_planar(const std::vector<double>& buf, int w, int h, int ch) {
    ImageF out(w, h, ch);
    const std::size_t plane = static_cast<std::size_t>(w) * h;
    for (int c = 0; c < ch; ++c)
        for (std::size_t i = 0; i < plane; ++i)
            out.data[i * ch + c] = buf[c * plane + i];
    return out;
}

std::vector<double> enc_forward(const Encoder& e, const NetConfig& cfg,
                                const ImageF& img, EncTrace* tr) {
    if (img.width != cfg.image_size || img.height != cfg.image_size || img.channels != 3)
        throw std::invalid_argument("prompt_encode: input size mismatch");
    const auto& kr = simd::active();
    const int s = cfg.image_size, ch = cfg.channels;
    const std::size_t plane = static_cast<std::size_t>(s) * s;
    std::vector<double> input = to_planar(img);
    std::vector<double> e1_pre(plane * ch);
    conv2d_fwd(input.data(), 3, s, s, e.conv1.w.ptr(), e.conv1.b.ptr(), ch, 3, e1_pre.data());
    std::vector<double> e1 = e1_pre;
    silu_inplace(e1);
    std::vector<double> e2_pre(plane * ch);
    conv2d_fwd(e1.data(), ch, s, s, e.conv2.w.ptr(), e.conv2.b.ptr(), ch, 3, e2_pre.data());
    std::vector<double> e2 = e2_pre;
    silu_inplace(e2);
    std::vector<double> pooled(ch);
    for (int c = 0; c < ch; ++c)
        pooled[c] = kr.sum(e2.data() + c * plane, plane) / static_cast<double>(plane);
    std::vector<double> out(cfg.d_p);
    linear_fwd(e.fc, pooled.data(), out.data());
    if (tr) {
        tr->input = std::move(input);
        tr->e1_pre = std::move(e1_pre);
        tr->e2_pre = std::move(e2_pre);
        tr->e1 = std::move(e1);
        tr->e2 = std::move(e2);
        tr->pooled = std::move(pooled);
        tr->size = s;
    }
    return out;
}

}  // namespace

std::vector<double> prompt_encode(const Encoder& e, const NetConfig& cfg, const ImageF& img) {
    return enc_forward(e, cfg, img, nullptr);
}

std::vector<double> prompt_encode(const Encoder& e, const NetConfig& cfg,
                                  const ImageF& img, EncTraceBox& trace) {
    return enc_forward(e, cfg, img, trace.t);
}

void prompt_encode_backward(const Encoder& e, const NetConfig& cfg,
                            const EncTraceBox& trace,
                            const std::vector<double>& d_out, Encoder& grads) {
    const EncTrace& tr = *trace.t;
    const int s = tr.size, ch = cfg.channels;
    const std::size_t plane = static_cast<std::size_t>(s) * s;

    std::vector<double> d_pooled(ch, 0.0);
    linear_bwd(e.fc, tr.pooled.data(), d_out.data(), grads.fc, d_pooled.data());

    std::vector<double> d_e2pre(plane * ch);
    for (int c = 0; c < ch; ++c) {
        const double spread = d_pooled[c] / static_cast<double>(plane);
        for (std::size_t i = 0; i < plane; ++i)
            d_e2pre[c * plane + i] = spread * silu_grad(tr.e2_pre[c * plane + i]);
    }
    conv2d_bwd_params(tr.e1.data(), ch, s, s, ch, 3, d_e2pre.data(),
                      grads.conv2.w.ptr(), grads.conv2.b.ptr());
    std::vector<double> d_e1(plane * ch, 0.0);
    conv2d_bwd_input(e.conv2.w.ptr(), ch, s, s, ch, 3, d_e2pre.data(), d_e1.data());
    for (std::size_t i = 0; i < d_e1.size(); ++i) d_e1[i] *= silu_grad(tr.e1_pre[i]);
    conv2d_bwd_params(tr.input.data(), 3, s, s, ch, 3, d_e1.data(),
                      grads.conv1.w.ptr(), grads.conv1.b.ptr());
}

// --- trunk ------------------------------------------------------------------

struct NetTrace {
    std::vector<double> x;     // planar input [3][S][S]
    std::vector<double> cond;  // planar [1][S][S]
    std::vector<double> ctx;   // time embedding ++ prompt
    double control_scale = 0.0;
    bool use_lora = false;

    std::vector<double> stem_pre;
    std::vector<double> h0;
    // per block
    std::vector<std::vector<double>> hin, u, y;
    std::vector<std::vector<double>> gamma, beta;
    std::vector<Tensor> w_eff;
    std::vector<double> h_last;

    // control branch
    std::vector<double> c_stem_pre, c_stem;
    std::vector<std::vector<double>> c_pre, c_act, r;
};

NetTraceBox::NetTraceBox() : t(new NetTrace) {}
NetTraceBox::~NetTraceBox() { delete t; }
NetTraceBox::NetTraceBox(NetTraceBox&& o) noexcept : t(o.t) { o.t = nullptr; }

ImageF net_forward(const ModelParams& p, const ImageF& x_t, double t,
                   const ImageF& cond, const std::vector<double>& prompt,
                   double control_scale, bool use_lora, NetTraceBox* trace) {
    const NetConfig& cfg = p.cfg;
    const int s = cfg.image_size, ch = cfg.channels, depth = cfg.depth;
    const std::size_t plane = static_cast<std::size_t>(s) * s;
    if (x_t.width != s || x_t.height != s || x_t.channels != 3)
        throw std::invalid_argument("net_forward: x_t shape mismatch");
    if (static_cast<int>(prompt.size()) != cfg.d_p)
        throw std::invalid_argument("net_forward: prompt length mismatch");
    const bool with_control = control_scale != 0.0;
    if (with_control && (cond.width != s || cond.height != s || cond.channels != 1))
        throw std::invalid_argument("net_forward: condition shape mismatch");

    NetTrace local;
    NetTrace& tr = trace ? *trace->t : local;
    tr.control_scale = control_scale;
    tr.use_lora = use_lora;
    tr.x = to_planar(x_t);
    tr.ctx = time_embed(t, cfg.time_dim);
    tr.ctx.insert(tr.ctx.end(), prompt.begin(), prompt.end());

    // control branch residuals
    tr.r.assign(depth, {});
    if (with_control) {
        tr.cond = to_planar(cond);
        tr.c_stem_pre.assign(plane * ch, 0.0);
        conv2d_fwd(tr.cond.data(), 1, s, s, p.control.stem.w.ptr(),
                   p.control.stem.b.ptr(), ch, 3, tr.c_stem_pre.data());
        tr.c_stem = tr.c_stem_pre;
        silu_inplace(tr.c_stem);
        tr.c_pre.assign(depth, {});
        tr.c_act.assign(depth, {});
        const std::vector<double>* prev = &tr.c_stem;
        for (int i = 0; i < depth; ++i) {
            tr.c_pre[i].assign(plane * ch, 0.0);
            conv2d_fwd(prev->data(), ch, s, s, p.control.blocks[i].conv.w.ptr(),
                       p.control.blocks[i].conv.b.ptr(), ch, 3, tr.c_pre[i].data());
            tr.c_act[i] = tr.c_pre[i];
            silu_inplace(tr.c_act[i]);
            tr.r[i].assign(plane * ch, 0.0);
            conv2d_fwd(tr.c_act[i].data(), ch, s, s, p.control.blocks[i].proj.w.ptr(),
                       p.control.blocks[i].proj.b.ptr(), ch, 1, tr.r[i].data());
            prev = &tr.c_act[i];
        }
    }

    // trunk
    tr.stem_pre.assign(plane * ch, 0.0);
    conv2d_fwd(tr.x.data(), 3, s, s, p.trunk.stem.w.ptr(), p.trunk.stem.b.ptr(),
               ch, 3, tr.stem_pre.data());
    tr.h0 = tr.stem_pre;
    silu_inplace(tr.h0);

    tr.hin.assign(depth, {});
    tr.u.assign(depth, {});
    tr.y.assign(depth, {});
    tr.gamma.assign(depth, {});
    tr.beta.assign(depth, {});
    tr.w_eff.clear();

    std::vector<double> h = tr.h0;
    for (int i = 0; i < depth; ++i) {
        if (with_control) {
            const auto& kr = simd::active();
            kr.axpy(control_scale, tr.r[i].data(), h.data(), plane * ch);
        }
        tr.hin[i] = h;
        tr.w_eff.push_back(effective_weight(p, i, use_lora));
        tr.u[i].assign(plane * ch, 0.0);
        conv2d_fwd(h.data(), ch, s, s, tr.w_eff[i].ptr(),
                   p.trunk.blocks[i].conv.b.ptr(), ch, 3, tr.u[i].data());
        // FiLM from (time, prompt) context
        std::vector<double> gb(2 * ch);
        linear_fwd(p.trunk.blocks[i].film, tr.ctx.data(), gb.data());
        tr.gamma[i].assign(gb.begin(), gb.begin() + ch);
        tr.beta[i].assign(gb.begin() + ch, gb.end());
        tr.y[i].assign(plane * ch, 0.0);
        for (int c = 0; c < ch; ++c) {
            const double gscale = 1.0 + tr.gamma[i][c];
            const double shift = tr.beta[i][c];
            for (std::size_t k = 0; k < plane; ++k)
                tr.y[i][c * plane + k] = gscale * tr.u[i][c * plane + k] + shift;
        }
        // residual: h = silu(y) + hin
        for (std::size_t k = 0; k < plane * ch; ++k)
            h[k] = silu(tr.y[i][k]) + tr.hin[i][k];
    }
    tr.h_last = h;

    std::vector<double> vhat(plane * 3, 0.0);
    conv2d_fwd(h.data(), ch, s, s, p.trunk.head.w.ptr(), p.trunk.head.b.ptr(),
               3, 3, vhat.data());
    return from_planar(vhat, s, s, 3);
}

void net_backward(const ModelParams& p, const NetTraceBox& trace,
                  const ImageF& d_vhat, ModelParams& grads,
                  InputGrads* input_grads) {
    const NetTrace& tr = *trace.t;
    if (tr.h_last.empty())
        throw std::logic_error("net_backward: missing forward trace");
    const NetConfig& cfg = p.cfg;
    const int s = cfg.image_size, ch = cfg.channels, depth = cfg.depth;
    const std::size_t plane = static_cast<std::size_t>(s) * s;
    const auto& kr = simd::active();
    const bool with_control = tr.control_scale != 0.0;

    std::vector<double> d_out = to_planar(d_vhat);

    // head
    conv2d_bwd_params(tr.h_last.data(), ch, s, s, 3, 3, d_out.data(),
                      grads.trunk.head.w.ptr(), grads.trunk.head.b.ptr());
    std::vector<double> d_h(plane * ch, 0.0);
    conv2d_bwd_input(p.trunk.head.w.ptr(), ch, s, s, 3, 3, d_out.data(), d_h.data());

    std::vector<double> d_ctx(tr.ctx.size(), 0.0);
    std::vector<std::vector<double>> d_r(depth);

    Tensor gw_eff({ch, ch, 3, 3});
    for (int i = depth - 1; i >= 0; --i) {
        // h = silu(y) + hin : d_y = d_h * silu'(y), d_hin starts as d_h
        std::vector<double> d_y(plane * ch);
        for (std::size_t k = 0; k < plane * ch; ++k)
            d_y[k] = d_h[k] * silu_grad(tr.y[i][k]);

        // FiLM: y_c = (1+gamma_c) u_c + beta_c
        std::vector<double> d_gb(2 * ch, 0.0);
        std::vector<double> d_u(plane * ch);
        for (int c = 0; c < ch; ++c) {
            d_gb[c] = kr.dot(d_y.data() + c * plane, tr.u[i].data() + c * plane, plane);
            d_gb[ch + c] = kr.sum(d_y.data() + c * plane, plane);
            const double gscale = 1.0 + tr.gamma[i][c];
            for (std::size_t k = 0; k < plane; ++k)
                d_u[c * plane + k] = gscale * d_y[c * plane + k];
        }
        linear_bwd(p.trunk.blocks[i].film, tr.ctx.data(), d_gb.data(),
                   grads.trunk.blocks[i].film, d_ctx.data());

        // block conv; weight grads land on the effective weight, then split
        gw_eff.zero();
        conv2d_bwd_params(tr.hin[i].data(), ch, s, s, ch, 3, d_u.data(),
                          gw_eff.ptr(), grads.trunk.blocks[i].conv.b.ptr());
        kr.axpy(1.0, gw_eff.ptr(), grads.trunk.blocks[i].conv.w.ptr(), gw_eff.numel());
        if (tr.use_lora) {
            const LoraPair& lp = p.lora[i];
            LoraPair& gl = grads.lora[i];
            const int rank = cfg.lora_rank;
            const int cols = ch * 9;
            const double f = cfg.lora_factor();
            for (int oc = 0; oc < ch; ++oc) {
                const double* gw_row = gw_eff.ptr() + static_cast<std::size_t>(oc) * cols;
                for (int r = 0; r < rank; ++r) {
                    gl.b.data[oc * rank + r] +=
                        f * kr.dot(gw_row, lp.a.ptr() + static_cast<std::size_t>(r) * cols, cols);
                    kr.axpy(f * lp.b.data[oc * rank + r], gw_row,
                            gl.a.ptr() + static_cast<std::size_t>(r) * cols, cols);
                }
            }
        }
        std::vector<double> d_hin = d_h;  // residual path
        conv2d_bwd_input(tr.w_eff[i].ptr(), ch, s, s, ch, 3, d_u.data(), d_hin.data());

        if (with_control) {
            d_r[i].assign(plane * ch, 0.0);
            kr.axpy(tr.control_scale, d_hin.data(), d_r[i].data(), plane * ch);
        }
        d_h = std::move(d_hin);
    }

    // stem
    std::vector<double> d_stem_pre(plane * ch);
    for (std::size_t k = 0; k < plane * ch; ++k)
        d_stem_pre[k] = d_h[k] * silu_grad(tr.stem_pre[k]);
    conv2d_bwd_params(tr.x.data(), 3, s, s, ch, 3, d_stem_pre.data(),
                      grads.trunk.stem.w.ptr(), grads.trunk.stem.b.ptr());

    // control branch
    if (with_control) {
        std::vector<double> carry(plane * ch, 0.0);
        for (int i = depth - 1; i >= 0; --i) {
            std::vector<double> d_act = std::move(carry);
            conv2d_bwd_input(p.control.blocks[i].proj.w.ptr(), ch, s, s, ch, 1,
                             d_r[i].data(), d_act.data());
            conv2d_bwd_params(tr.c_act[i].data(), ch, s, s, ch, 1, d_r[i].data(),
                              grads.control.blocks[i].proj.w.ptr(),
                              grads.control.blocks[i].proj.b.ptr());
            for (std::size_t k = 0; k < plane * ch; ++k)
                d_act[k] *= silu_grad(tr.c_pre[i][k]);
            const std::vector<double>& in = i == 0 ? tr.c_stem : tr.c_act[i - 1];
            conv2d_bwd_params(in.data(), ch, s, s, ch, 3, d_act.data(),
                              grads.control.blocks[i].conv.w.ptr(),
                              grads.control.blocks[i].conv.b.ptr());
            carry.assign(plane * ch, 0.0);
            conv2d_bwd_input(p.control.blocks[i].conv.w.ptr(), ch, s, s, ch, 3,
                             d_act.data(), carry.data());
        }
        for (std::size_t k = 0; k < plane * ch; ++k)
            carry[k] *= silu_grad(tr.c_stem_pre[k]);
        conv2d_bwd_params(tr.cond.data(), 1, s, s, ch, 3, carry.data(),
                          grads.control.stem.w.ptr(), grads.control.stem.b.ptr());
    }

    if (input_grads)
        input_grads->d_prompt.assign(d_ctx.begin() + cfg.time_dim, d_ctx.end());
}

ModelParams merge_lora(const ModelParams& p) {
    ModelParams out = p;
    const auto& kr = simd::active();
    const int ch = p.cfg.channels;
    const int rank = p.cfg.lora_rank;
    const int cols = ch * 9;
    const double f = p.cfg.lora_factor();
    for (int i = 0; i < p.cfg.depth; ++i) {
        for (int oc = 0; oc < ch; ++oc)
            for (int r = 0; r < rank; ++r)
                kr.axpy(f * p.lora[i].b.data[oc * rank + r],
                        p.lora[i].a.ptr() + static_cast<std::size_t>(r) * cols,
                        out.trunk.blocks[i].conv.w.ptr() + static_cast<std::size_t>(oc) * cols,
                        cols);
        out.lora[i].b.zero();
    }
    return out;
}

// --- checkpoints -------------------------------------------------------------

namespace {

void write_bytes(std::FILE* f, const void* p, std::size_t n, const std::string& path) {
    if (std::fwrite(p, 1, n, f) != n)
        throw std::runtime_error("save_params: write failed: " + path);
}

void read_bytes(std::FILE* f, void* p, std::size_t n, const std::string& path) {
    if (std::fread(p, 1, n, f) != n)
        throw std::runtime_error("load_params: truncated file: " + path);
}

}  // namespace

void save_params(const ModelParams& p, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("save_params: cannot open " + path);
    try {
        write_bytes(f, "CFLX", 4, path);
        const std::uint32_t ver = kCheckpointVersion;
        write_bytes(f, &ver, 4, path);
        const std::int32_t ints[6] = {p.cfg.image_size, p.cfg.channels, p.cfg.depth,
                                      p.cfg.d_p, p.cfg.lora_rank, p.cfg.time_dim};
        write_bytes(f, ints, sizeof(ints), path);
        write_bytes(f, &p.cfg.lora_scale, 8, path);
        visit_params(p, [&](ParamGroup, const std::string&, const Tensor& t) {
            const std::uint64_t n = t.numel();
            write_bytes(f, &n, 8, path);
            write_bytes(f, t.ptr(), n * 8, path);
        });
    } catch (...) {
        std::fclose(f);
        throw;
    }
    if (std::fclose(f) != 0)
        throw std::runtime_error("save_params: close failed: " + path);
}

ModelParams load_params(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("load_params: cannot open " + path);
    try {
        char magic[4];
        read_bytes(f, magic, 4, path);
        if (std::memcmp(magic, "CFLX", 4) != 0)
            throw std::runtime_error("load_params: bad magic in " + path);
        std::uint32_t ver = 0;
        read_bytes(f, &ver, 4, path);
        if (ver != kCheckpointVersion)
            throw std::runtime_error("load_params: unsupported version " +
                                     std::to_string(ver) + " in " + path);
        std::int32_t ints[6];
        read_bytes(f, ints, sizeof(ints), path);
        NetConfig cfg;
        cfg.image_size = ints[0];
        cfg.channels = ints[1];
        cfg.depth = ints[2];
        cfg.d_p = ints[3];
        cfg.lora_rank = ints[4];
        cfg.time_dim = ints[5];
        read_bytes(f, &cfg.lora_scale, 8, path);
        ModelParams p = make_params(cfg);
        visit_params(p, [&](ParamGroup, const std::string& name, Tensor& t) {
            std::uint64_t n = 0;
            read_bytes(f, &n, 8, path);
            if (n != t.numel())
                throw std::runtime_error("load_params: shape mismatch for " + name +
                                         " in " + path);
            read_bytes(f, t.ptr(), n * 8, path);
        });
        std::fclose(f);
        return p;
    } catch (...) {
        std::fclose(f);
        throw;
    }
}

ModelParams load_params(const std::string& path, const NetConfig& expected) {
    ModelParams p = load_params(path);
    if (!(p.cfg == expected))
        throw std::runtime_error("load_params: checkpoint config mismatch: " + path);
    return p;
}

}  // namespace cflx
