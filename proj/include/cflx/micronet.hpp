#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cflx/image.hpp"
#include "cflx/tensor.hpp"

namespace cflx {

// Desk-scale conditional velocity network: conv trunk with FiLM conditioning
// from a sinusoidal time embedding plus a visual prompt embedding, an
// additive zero-projected control branch fed by the grayscale condition, and
// low-rank adapters on the trunk block convolutions.
struct NetConfig {
    int image_size = 16;
    int channels = 16;
    int depth = 3;
    int d_p = 8;
    int lora_rank = 4;
    int time_dim = 16;
    double lora_scale = 0.0;  // 0 means "equal to rank" (factor 1)

    double lora_factor() const {
        return (lora_scale > 0.0 ? lora_scale : lora_rank) / lora_rank;
    }
    bool operator==(const NetConfig&) const = default;
};

struct Conv {
    Tensor w;  // [out][in][k][k]
    Tensor b;  // [out]
    int in_ch = 0, out_ch = 0, k = 3;
    bool operator==(const Conv&) const = default;
};

struct Linear {
    Tensor w;  // [out][in]
    Tensor b;  // [out]
    int in_dim = 0, out_dim = 0;
    bool operator==(const Linear&) const = default;
};

struct TrunkBlock {
    Conv conv;    // Ch -> Ch, 3x3
    Linear film;  // (time_dim + d_p) -> 2*Ch (scale, shift)
    bool operator==(const TrunkBlock&) const = default;
};

struct Trunk {
    Conv stem;  // 3 -> Ch
    std::vector<TrunkBlock> blocks;
    Conv head;  // Ch -> 3
    bool operator==(const Trunk&) const = default;
};

struct ControlBlock {
    Conv conv;  // Ch -> Ch, 3x3 (copied from trunk at init)
    Conv proj;  // Ch -> Ch, 1x1, zero-initialized
    bool operator==(const ControlBlock&) const = default;
};

struct Control {
    Conv stem;  // 1 -> Ch
    std::vector<ControlBlock> blocks;
    bool operator==(const Control&) const = default;
};

struct Encoder {
    Conv conv1;  // 3 -> Ch
    Conv conv2;  // Ch -> Ch
    Linear fc;   // Ch -> d_p
    bool operator==(const Encoder&) const = default;
};

struct LoraPair {
    Tensor a;  // [rank][Ch*k*k], random init
    Tensor b;  // [Ch][rank], zero init
    bool operator==(const LoraPair&) const = default;
};

enum class ParamGroup { Trunk, Control, Phi, PhiPrime, Lora };

struct GroupMask {
    bool trunk = false, control = false, phi = false, phi_prime = false, lora = false;
    bool get(ParamGroup g) const;
    static GroupMask all();
    static GroupMask only(ParamGroup g);
};

struct ModelParams {
    NetConfig cfg;
    Trunk trunk;
    Control control;
    Encoder phi;
    Encoder phi_prime;
    std::vector<LoraPair> lora;  // one per trunk block
    bool operator==(const ModelParams&) const = default;
};

ModelParams init_params(const NetConfig& cfg, std::uint64_t seed);
ModelParams zeros_like(const ModelParams& p);

// Visits every parameter tensor in a fixed declared order.
void visit_params(ModelParams& p,
                  const std::function<void(ParamGroup, const std::string&, Tensor&)>& fn);
void visit_params(const ModelParams& p,
                  const std::function<void(ParamGroup, const std::string&, const Tensor&)>& fn);

// Zeroes every tensor whose group is not kept trainable.
void mask_grads(ModelParams& grads, const GroupMask& trainable);

// --- prompt encoder -------------------------------------------------------

struct EncTrace;  // defined in micronet.cpp

std::vector<double> prompt_encode(const Encoder& e, const NetConfig& cfg,
                                  const ImageF& img);
// Trace-returning variant for backprop.
struct EncTraceBox {
    EncTraceBox();
    ~EncTraceBox();
    EncTraceBox(EncTraceBox&&) noexcept;
    EncTrace* t;
};
std::vector<double> prompt_encode(const Encoder& e, const NetConfig& cfg,
                                  const ImageF& img, EncTraceBox& trace);
void prompt_encode_backward(const Encoder& e, const NetConfig& cfg,
                            const EncTraceBox& trace,
                            const std::vector<double>& d_out, Encoder& grads);

// Replicates a 1-channel image to 3 channels (for encoding gray conditions).
ImageF replicate3(const ImageF& gray);

// --- trunk forward / backward ---------------------------------------------

struct NetTrace;

struct NetTraceBox {
    NetTraceBox();
    ~NetTraceBox();
    NetTraceBox(NetTraceBox&&) noexcept;
    NetTrace* t;
};

ImageF net_forward(const ModelParams& p, const ImageF& x_t, double t,
                   const ImageF& cond, const std::vector<double>& prompt,
                   double control_scale, bool use_lora,
                   NetTraceBox* trace = nullptr);

struct InputGrads {
    std::vector<double> d_prompt;
};

// Accumulates parameter gradients for a matching forward trace.
void net_backward(const ModelParams& p, const NetTraceBox& trace,
                  const ImageF& d_vhat, ModelParams& grads,
                  InputGrads* input_grads = nullptr);

// Folds W += (s/r) * B * A into the trunk block convs and zeroes B.
ModelParams merge_lora(const ModelParams& p);

// --- checkpoints ------------------------------------------------------------

// Binary checkpoint: magic "CFLX", u32 version, config block, parameter blobs
// in declared order. Round trip is byte-exact.
void save_params(const ModelParams& p, const std::string& path);
ModelParams load_params(const std::string& path);
// Rejects checkpoints whose stored config differs from the expected one.
ModelParams load_params(const std::string& path, const NetConfig& expected);

std::vector<double> time_embed(double t, int time_dim);

}  // namespace cflx
