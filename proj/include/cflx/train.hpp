#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cflx/dpo.hpp"
#include "cflx/micronet.hpp"
#include "cflx/pref_data.hpp"

namespace cflx {

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    ModelParams m, v;
    long step = 0;
};

// Bias-corrected update over one flat parameter array; step is 1-based.
void adam_step_flat(double* p, const double* g, double* m, double* v,
                    std::size_t n, long step, const AdamHyper& hyper);

// Updates only trainable groups; non-finite gradients abort the run.
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
               const AdamHyper& hyper, const GroupMask& trainable);

// Append-only line log; losses are checked finite before logging.
class RunLog {
public:
    RunLog() = default;
    explicit RunLog(const std::string& path);
    void line(const std::string& record);

private:
    std::string path_;
};

struct TrainOpts {
    int epochs = 2;
    double lr = 1e-3;
    int batch_size = 16;
    double alpha = 0.1;          // fm + alpha * distill
    double control_scale = 1.0;  // stages with the control branch active
    std::uint64_t seed = 0;      // master seed; stages derive named substreams
    double val_fraction = 0.2;   // tail of the corpus held out per stage
    std::string log_path;        // empty = no RunLog
};

struct StageResult {
    ModelParams params;
    std::vector<double> epoch_train_loss;
    std::vector<double> epoch_val_loss;
};

// Base color-prior proxy: trains trunk + phi_prime with fm loss, control off,
// prompt from phi_prime on the ground truth.
StageResult run_stage_base(const ModelParams& init,
                           const std::vector<CorpusImage>& corpus,
                           const TrainOpts& opts);

// Structure consistency: control branch only; condition = gray(gt),
// prompt from frozen phi_prime on the ground truth.
StageResult run_stage_structure(const ModelParams& base,
                                const std::vector<CorpusImage>& corpus,
                                const TrainOpts& opts);

// Basic color learning: phi only (initialized from phi_prime) with
// fm + alpha * distill, prompt from phi on the gray condition.
StageResult run_stage_basic_color(const ModelParams& structure_ckpt,
                                  const std::vector<CorpusImage>& corpus,
                                  const TrainOpts& opts);

enum class DpoMode { Progressive, OneStage, Sft };
enum class RefPolicy { Fixed, Rebase };

// Fine-color adjustment: lora only. Progressive mode runs the two schedule
// stages (triplets rebuilt per stage range); one-stage uses the union range
// [stage1.lo, stage2.hi] for the combined epoch budget; sft swaps in the
// supervised loss on (condition, winner) pairs over the same data.
StageResult run_stage_pro_dpo(const ModelParams& basic_ckpt,
                              const std::vector<Image8>& gts,
                              const DpoConfig& dcfg, DpoMode mode,
                              RefPolicy ref_policy, const TrainOpts& opts);

// write-temp-then-rename
void save_checkpoint_atomic(const ModelParams& p, const std::string& path);

}  // namespace cflx
