#include "cflx/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "cflx/color.hpp"
#include "cflx/flow.hpp"
#include "cflx/simd.hpp"

namespace cflx {

void adam_step_flat(double* p, const double* g, double* m, double* v,
                    std::size_t n, long step, const AdamHyper& hyper) {
    const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step));
    simd::active().adam_update(p, g, m, v, n, hyper.lr, hyper.beta1, hyper.beta2,
                               hyper.eps, bc1, bc2);
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
               const AdamHyper& hyper, const GroupMask& trainable) {
    visit_params(const_cast<ModelParams&>(grads),
                 [](ParamGroup, const std::string& name, Tensor& t) {
                     for (double v : t.data)
                         if (!std::isfinite(v))
                             throw std::runtime_error("adam_step: non-finite gradient in " + name);
                 });
    ++state.step;
    // walk the three structures in lockstep via collected pointers
    std::vector<Tensor*> pt, gt, mt, vt;
    std::vector<ParamGroup> groups;
    auto collect = [](ModelParams& mp, std::vector<Tensor*>& out,
                      std::vector<ParamGroup>* gps) {
        visit_params(mp, [&](ParamGroup g, const std::string&, Tensor& t) {
            out.push_back(&t);
            if (gps) gps->push_back(g);
        });
    };
    collect(params, pt, &groups);
    collect(const_cast<ModelParams&>(grads), gt, nullptr);
    collect(state.m, mt, nullptr);
    collect(state.v, vt, nullptr);
    for (std::size_t i = 0; i < pt.size(); ++i) {
        if (!trainable.get(groups[i])) continue;
        adam_step_flat(pt[i]->ptr(), gt[i]->ptr(), mt[i]->ptr(), vt[i]->ptr(),
                       pt[i]->numel(), state.step, hyper);
    }
}

RunLog::RunLog(const std::string& path) : path_(path) {
    if (!path_.empty()) {
        std::ofstream f(path_, std::ios::app);
        if (!f) throw std::runtime_error("RunLog: cannot open " + path_);
    }
}

void RunLog::line(const std::string& record) {
    if (path_.empty()) return;
    std::ofstream f(path_, std::ios::app);
    f << record << '\n';
}

namespace {

struct Split {
    std::vector<std::size_t> train, val;
};

Split split_corpus(std::size_t n, double val_fraction) {
    Split s;
    const std::size_t n_val = static_cast<std::size_t>(n * val_fraction);
    for (std::size_t i = 0; i < n - n_val; ++i) s.train.push_back(i);
    for (std::size_t i = n - n_val; i < n; ++i) s.val.push_back(i);
    if (s.train.empty()) throw std::runtime_error("train: empty training split");
    return s;
}

void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[rng.next_below(i)]);
}

void accumulate(ModelParams& acc, const ModelParams& g, double scale) {
    std::vector<const Tensor*> src;
    visit_params(g, [&](ParamGroup, const std::string&, const Tensor& t) {
        src.push_back(&t);
    });
    std::size_t i = 0;
    visit_params(acc, [&](ParamGroup, const std::string&, Tensor& t) {
        simd::active().axpy(scale, src[i]->ptr(), t.ptr(), t.numel());
        ++i;
    });
}

// Per-sample loss evaluation shared by the fm-style stages.
enum class StageKind { Base, Structure, BasicColor };

double stage_sample_loss(const ModelParams& p, StageKind kind, const Image8& gt,
                         double t, const ImageF& eps, double alpha,
                         double control_scale, ModelParams* grads) {
    const ImageF x0 = to_float(gt);
    switch (kind) {
        case StageKind::Base:
            return fm_loss_net(p, x0, eps, t, ImageF(), PromptSource::PhiPrimeGt,
                               0.0, false, grads);
        case StageKind::Structure: {
            const ImageF cond = to_float(rgb_to_gray(gt));
            return fm_loss_net(p, x0, eps, t, cond, PromptSource::PhiPrimeGt,
                               control_scale, false, grads);
        }
        case StageKind::BasicColor: {
            const ImageF cond = to_float(rgb_to_gray(gt));
            return combined_loss_net(p, x0, eps, t, cond, alpha, control_scale, grads);
        }
    }
    return 0.0;
}

StageResult run_fm_stage(const ModelParams& start, StageKind kind,
                         const GroupMask& trainable, const char* stage_name,
                         const std::vector<CorpusImage>& corpus,
                         const TrainOpts& opts) {
    if (corpus.empty()) throw std::runtime_error("train: empty corpus");
    RunLog log(opts.log_path);
    StageResult res;
    res.params = start;
    AdamState state{zeros_like(start), zeros_like(start), 0};
    AdamHyper hyper;
    hyper.lr = opts.lr;
    const Split split = split_corpus(corpus.size(), opts.val_fraction);

    Rng rng = Rng::stream(opts.seed, std::string("stage.") + stage_name);
    std::vector<std::size_t> order = split.train;
    const ImageF proto = to_float(corpus[0].img);

    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        shuffle_indices(order, rng);
        double epoch_loss = 0.0;
        std::size_t steps = 0;
        for (std::size_t off = 0; off < order.size(); off += opts.batch_size) {
            const std::size_t end = std::min(order.size(),
                                             off + static_cast<std::size_t>(opts.batch_size));
            ModelParams grads = zeros_like(res.params);
            double batch_loss = 0.0;
            for (std::size_t bi = off; bi < end; ++bi) {
                const Image8& gt = corpus[order[bi]].img;
                const double t = sample_t(rng);
                const ImageF eps = gaussian_like(proto, rng);
                ModelParams g = zeros_like(res.params);
                batch_loss += stage_sample_loss(res.params, kind, gt, t, eps,
                                                opts.alpha, opts.control_scale, &g);
                accumulate(grads, g, 1.0 / static_cast<double>(end - off));
            }
            batch_loss /= static_cast<double>(end - off);
            if (!std::isfinite(batch_loss))
                throw std::runtime_error("train: non-finite loss, aborting");
            mask_grads(grads, trainable);
            adam_step(res.params, grads, state, hyper, trainable);
            epoch_loss += batch_loss;
            ++steps;
            log.line(std::string("stage=") + stage_name + " epoch=" +
                     std::to_string(epoch) + " step=" + std::to_string(steps) +
                     " loss=" + std::to_string(batch_loss));
        }
        res.epoch_train_loss.push_back(epoch_loss / static_cast<double>(steps));

        // validation pass with a fixed per-epoch substream
        Rng vrng = Rng::stream(opts.seed, std::string("val.") + stage_name);
        double val = 0.0;
        const auto& vidx = split.val.empty() ? split.train : split.val;
        for (std::size_t i : vidx) {
            const double t = sample_t(vrng);
            const ImageF eps = gaussian_like(proto, vrng);
            val += stage_sample_loss(res.params, kind, corpus[i].img, t, eps,
                                     opts.alpha, opts.control_scale, nullptr);
        }
        val /= static_cast<double>(vidx.size());
        res.epoch_val_loss.push_back(val);
        log.line(std::string("stage=") + stage_name + " epoch=" +
                 std::to_string(epoch) + " val_loss=" + std::to_string(val));
    }
    return res;
}

}  // namespace

StageResult run_stage_base(const ModelParams& init,
                           const std::vector<CorpusImage>& corpus,
                           const TrainOpts& opts) {
    GroupMask m;
    m.trunk = true;
    m.phi_prime = true;
    return run_fm_stage(init, StageKind::Base, m, "base", corpus, opts);
}

StageResult run_stage_structure(const ModelParams& base,
                                const std::vector<CorpusImage>& corpus,
                                const TrainOpts& opts) {
    return run_fm_stage(base, StageKind::Structure, GroupMask::only(ParamGroup::Control),
                        "structure", corpus, opts);
}

StageResult run_stage_basic_color(const ModelParams& structure_ckpt,
                                  const std::vector<CorpusImage>& corpus,
                                  const TrainOpts& opts) {
    ModelParams start = structure_ckpt;
    start.phi = start.phi_prime;  // phi initialized from the frozen copy
    return run_fm_stage(start, StageKind::BasicColor, GroupMask::only(ParamGroup::Phi),
                        "basic_color", corpus, opts);
}

StageResult run_stage_pro_dpo(const ModelParams& basic_ckpt,
                              const std::vector<Image8>& gts,
                              const DpoConfig& dcfg, DpoMode mode,
                              RefPolicy ref_policy, const TrainOpts& opts) {
    if (gts.empty()) throw std::runtime_error("run_stage_pro_dpo: empty dataset");
    RunLog log(opts.log_path);

    std::vector<StageConfig> stages;
    if (mode == DpoMode::Progressive) {
        const auto sched = pro_dpo_schedule(dcfg);
        stages.assign(sched.begin(), sched.end());
    } else {
        // One-stage ablation: identical epoch/lr schedule, but the wide
        // union of the two ranges throughout. The progressive strategy is
        // the augmentation curriculum, so only the ranges differ.
        StageConfig s1 = dcfg.stage1, s2 = dcfg.stage2;
        const AugRange uni{dcfg.stage1.range.lo, dcfg.stage2.range.hi};
        s1.range = uni;
        s2.range = uni;
        stages.push_back(s1);
        stages.push_back(s2);
    }

    StageResult res;
    res.params = basic_ckpt;
    ModelParams ref = basic_ckpt;

    for (std::size_t si = 0; si < stages.size(); ++si) {
        const StageConfig& sc = stages[si];
        const std::string name = "dpo" + std::to_string(si);
        Rng rng = Rng::stream(opts.seed, "stage." + name);

        // triplets rebuilt with this stage's augmentation range
        std::vector<Triplet> triplets;
        for (const Image8& gt : gts)
            triplets.push_back(build_triplet(gt, rng.next_u64(), sc.range));

        AdamState state{zeros_like(res.params), zeros_like(res.params), 0};
        AdamHyper hyper;
        // opts.lr > 0 rescales the schedule, preserving the stage ratio
        hyper.lr = opts.lr > 0.0
                       ? opts.lr * (sc.learning_rate / stages[0].learning_rate)
                       : sc.learning_rate;
        const GroupMask trainable = GroupMask::only(ParamGroup::Lora);
        const ImageF proto = to_float(gts[0]);

        std::vector<std::size_t> order(triplets.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

        for (int epoch = 0; epoch < sc.epochs; ++epoch) {
            shuffle_indices(order, rng);
            double epoch_loss = 0.0;
            std::size_t steps = 0;
            for (std::size_t off = 0; off < order.size(); off += sc.batch_size) {
                const std::size_t end = std::min(order.size(),
                                                 off + static_cast<std::size_t>(sc.batch_size));
                ModelParams grads = zeros_like(res.params);
                double batch_loss = 0.0;
                for (std::size_t bi = off; bi < end; ++bi) {
                    const Triplet& tr = triplets[order[bi]];
                    const double t = sample_t(rng);
                    const ImageF eps_w = gaussian_like(proto, rng);
                    const ImageF eps_l = gaussian_like(proto, rng);
                    ModelParams g = zeros_like(res.params);
                    double l;
                    if (mode == DpoMode::Sft)
                        l = sft_loss(res.params, tr, t, eps_w, opts.control_scale, &g);
                    else
                        l = dpo_loss(res.params, ref, tr, t, eps_w, eps_l, dcfg,
                                     opts.control_scale, &g);
                    batch_loss += l;
                    accumulate(grads, g, 1.0 / static_cast<double>(end - off));
                }
                batch_loss /= static_cast<double>(end - off);
                if (!std::isfinite(batch_loss))
                    throw std::runtime_error("train: non-finite loss, aborting");
                mask_grads(grads, trainable);
                adam_step(res.params, grads, state, hyper, trainable);
                epoch_loss += batch_loss;
                ++steps;
                log.line("stage=" + name + " epoch=" + std::to_string(epoch) +
                         " step=" + std::to_string(steps) +
                         " loss=" + std::to_string(batch_loss));
            }
            res.epoch_train_loss.push_back(epoch_loss / static_cast<double>(steps));
        }

        if (ref_policy == RefPolicy::Rebase && si + 1 < stages.size()) {
            // re-base the reference to the merged stage result
            res.params = merge_lora(res.params);
            ref = res.params;
        }
    }

    res.params = merge_lora(res.params);
    return res;
}

void save_checkpoint_atomic(const ModelParams& p, const std::string& path) {
    const std::string tmp = path + ".tmp";
    save_params(p, tmp);
    std::filesystem::rename(tmp, path);
}

}  // namespace cflx
