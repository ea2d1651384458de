#pragma once

#include <vector>

#include "cflx/rng.hpp"

namespace cflx {

// Dense row-major 64-bit float tensor.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s);

    std::size_t numel() const { return data.size(); }
    void zero();
    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }
    bool operator==(const Tensor&) const = default;
};

void fill_uniform(Tensor& t, Rng& rng, double lo, double hi);

// Conv layers use pad = k/2 (same-size output).
void conv2d_fwd(const double* in, int in_ch, int h, int w, const double* weight,
                const double* bias, int out_ch, int k, double* out);
void conv2d_bwd_input(const double* weight, int in_ch, int h, int w, int out_ch,
                      int k, const double* gout, double* gin);
void conv2d_bwd_params(const double* in, int in_ch, int h, int w, int out_ch,
                       int k, const double* gout, double* gweight, double* gbias);

double silu(double x);
double silu_grad(double x);

}  // namespace cflx
