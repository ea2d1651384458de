// colorflux: desk-scale rectified-flow colorization pipeline.
//
// Subcommands: gen, filter, pairs, train, colorize, eval, winrate.
// Every command writes a machine-readable summary (key=value lines) to both
// stdout and <run_dir>/summary.txt; exit code 0 iff the summary was written.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cflx/augment.hpp"
#include "cflx/color.hpp"
#include "cflx/dpo.hpp"
#include "cflx/eval.hpp"
#include "cflx/flow.hpp"
#include "cflx/micronet.hpp"
#include "cflx/png_io.hpp"
#include "cflx/pref_data.hpp"
#include "cflx/rng.hpp"
#include "cflx/train.hpp"

using namespace cflx;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Config file: plain key=value, '#' comments, unknown keys rejected.
// ---------------------------------------------------------------------------

const std::set<std::string>& known_config_keys() {
    static const std::set<std::string> keys = {
        "net.image_size", "net.channels", "net.depth", "net.d_p",
        "net.lora_rank", "net.time_dim", "net.lora_scale",
        "train.epochs", "train.lr", "train.batch_size", "train.alpha",
        "train.control_scale", "train.seed", "train.val_fraction",
        "dpo.beta", "dpo.beta_mode", "dpo.stage1.lo", "dpo.stage1.hi",
        "dpo.stage1.lr", "dpo.stage1.epochs", "dpo.stage2.lo", "dpo.stage2.hi",
        "dpo.stage2.lr", "dpo.stage2.epochs", "dpo.ref_policy",
        "filter.preset", "filter.min_colorfulness", "filter.sat_lo",
        "filter.sat_hi", "filter.bright_lo", "filter.bright_hi",
        "sample.steps", "sample.seed", "sample.guidance_scale",
        "sample.control_scale", "sample.resize",
    };
    return keys;
}

std::map<std::string, std::string> read_config(const std::string& path) {
    std::map<std::string, std::string> cfg;
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        // trim
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        auto last = line.find_last_not_of(" \t\r");
        line = line.substr(first, last - first + 1);
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line " + std::to_string(lineno) +
                                     ": expected key=value");
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        auto trim = [](std::string& s) {
            const auto a = s.find_first_not_of(" \t");
            const auto b = s.find_last_not_of(" \t");
            s = (a == std::string::npos) ? "" : s.substr(a, b - a + 1);
        };
        trim(key);
        trim(value);
        if (!known_config_keys().count(key))
            throw std::runtime_error("unknown config key: " + key);
        cfg[key] = value;
    }
    return cfg;
}

double cfg_num(const std::map<std::string, std::string>& cfg,
               const std::string& key, double fallback) {
    auto it = cfg.find(key);
    return it == cfg.end() ? fallback : std::stod(it->second);
}

std::string cfg_str(const std::map<std::string, std::string>& cfg,
                    const std::string& key, const std::string& fallback) {
    auto it = cfg.find(key);
    return it == cfg.end() ? fallback : it->second;
}

NetConfig net_config_from(const std::map<std::string, std::string>& cfg) {
    NetConfig nc;
    nc.image_size = int(cfg_num(cfg, "net.image_size", nc.image_size));
    nc.channels = int(cfg_num(cfg, "net.channels", nc.channels));
    nc.depth = int(cfg_num(cfg, "net.depth", nc.depth));
    nc.d_p = int(cfg_num(cfg, "net.d_p", nc.d_p));
    nc.lora_rank = int(cfg_num(cfg, "net.lora_rank", nc.lora_rank));
    nc.time_dim = int(cfg_num(cfg, "net.time_dim", nc.time_dim));
    nc.lora_scale = cfg_num(cfg, "net.lora_scale", nc.lora_scale);
    return nc;
}

// ---------------------------------------------------------------------------
// Run directories and summaries.
// ---------------------------------------------------------------------------

std::string run_root() {
    if (const char* env = std::getenv("CFLX_RUN_ROOT")) return env;
    return "runs";
}

std::string make_run_dir(const std::string& command,
                         const std::string& override_dir) {
    if (!override_dir.empty()) {
        fs::create_directories(override_dir);
        return override_dir;
    }
    const auto now = std::chrono::system_clock::now();
    const auto tt = std::chrono::system_clock::to_time_t(now);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", std::localtime(&tt));
    for (int i = 0;; ++i) {
        fs::path dir = fs::path(run_root()) /
                       (command + "-" + stamp + (i ? "-" + std::to_string(i) : ""));
        if (!fs::exists(dir)) {
            fs::create_directories(dir);
            return dir.string();
        }
    }
}

void snapshot_config(const std::string& config_path, const std::string& run_dir) {
    if (!config_path.empty())
        fs::copy_file(config_path, fs::path(run_dir) / "config.snapshot",
                      fs::copy_options::overwrite_existing);
}

struct Summary {
    std::vector<std::pair<std::string, std::string>> rows;
    void add(const std::string& k, const std::string& v) { rows.push_back({k, v}); }
    void add(const std::string& k, double v) {
        std::ostringstream os;
        os.precision(10);
        os << v;
        rows.push_back({k, os.str()});
    }
    void write(const std::string& run_dir) const {
        std::ofstream out(fs::path(run_dir) / "summary.txt");
        for (const auto& [k, v] : rows) {
            out << k << "=" << v << "\n";
            std::cout << k << "=" << v << "\n";
        }
    }
};

// ---------------------------------------------------------------------------
// Corpus directory I/O: img_NNNN.png files plus labels.tsv.
// ---------------------------------------------------------------------------

void write_corpus(const std::vector<CorpusImage>& corpus, const std::string& dir) {
    fs::create_directories(dir);
    std::ofstream labels(fs::path(dir) / "labels.tsv");
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "img_%04zu.png", i);
        write_png((fs::path(dir) / name).string(), corpus[i].img);
        labels << name << "\t" << corpus[i].hue_class << "\n";
    }
}

std::vector<CorpusImage> load_corpus(const std::string& dir) {
    std::vector<CorpusImage> corpus;
    const auto labels_path = fs::path(dir) / "labels.tsv";
    if (fs::exists(labels_path)) {
        std::ifstream in(labels_path);
        std::string name;
        int label;
        while (in >> name >> label)
            corpus.push_back({read_png((fs::path(dir) / name).string()), label});
        return corpus;
    }
    // Fall back to any PNG folder (labels unknown).
    std::vector<fs::path> paths;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".png") paths.push_back(e.path());
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) corpus.push_back({read_png(p.string()), -1});
    if (corpus.empty()) throw std::runtime_error("no PNG images found in " + dir);
    return corpus;
}

// ---------------------------------------------------------------------------
// Checkpoint stage metadata: "<ckpt>.meta" records which stage produced it.
// ---------------------------------------------------------------------------

void write_stage_meta(const std::string& ckpt_path, const std::string& stage) {
    std::ofstream out(ckpt_path + ".meta");
    out << "stage=" << stage << "\n";
    // The paper's guidance scale has no input at this scale; recorded as
    // inert run metadata.
    out << "guidance_scale=3.5\n";
    out << "control_scale=1\n";
}

std::string read_stage_meta(const std::string& ckpt_path) {
    std::ifstream in(ckpt_path + ".meta");
    std::string line;
    while (std::getline(in, line))
        if (line.rfind("stage=", 0) == 0) return line.substr(6);
    return "";
}

void require_stage(const std::string& ckpt_path, const std::string& required,
                   const std::string& for_stage) {
    const auto got = read_stage_meta(ckpt_path);
    if (got != required)
        throw std::runtime_error("stage '" + for_stage +
                                 "' requires a checkpoint produced by stage '" +
                                 required + "' (got '" +
                                 (got.empty() ? "unknown" : got) + "'); train '" +
                                 required + "' first");
}

// ---------------------------------------------------------------------------
// Bilinear / nearest resize on 8-bit images (via the float domain).
// ---------------------------------------------------------------------------

Image8 resize_image(const Image8& img, int out_w, int out_h,
                    const std::string& mode) {
    if (img.width == out_w && img.height == out_h) return img;
    auto f = to_float(img);
    ImageF out(out_w, out_h, img.channels);
    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            const double sx = (x + 0.5) * img.width / out_w - 0.5;
            const double sy = (y + 0.5) * img.height / out_h - 0.5;
            if (mode == "nearest") {
                const int ix = std::clamp(int(std::floor(sx + 0.5)), 0,
                                          img.width - 1);
                const int iy = std::clamp(int(std::floor(sy + 0.5)), 0,
                                          img.height - 1);
                for (int c = 0; c < img.channels; ++c)
                    out.at(x, y, c) = f.at(ix, iy, c);
            } else {  // bilinear
                const int x0 = std::clamp(int(std::floor(sx)), 0, img.width - 1);
                const int y0 = std::clamp(int(std::floor(sy)), 0, img.height - 1);
                const int x1 = std::min(x0 + 1, img.width - 1);
                const int y1 = std::min(y0 + 1, img.height - 1);
                const double fx = std::clamp(sx - x0, 0.0, 1.0);
                const double fy = std::clamp(sy - y0, 0.0, 1.0);
                for (int c = 0; c < img.channels; ++c) {
                    const double top = (1 - fx) * f.at(x0, y0, c) +
                                       fx * f.at(x1, y0, c);
                    const double bot = (1 - fx) * f.at(x0, y1, c) +
                                       fx * f.at(x1, y1, c);
                    out.at(x, y, c) = (1 - fy) * top + fy * bot;
                }
            }
        }
    }
    return from_float(out);
}

TrainOpts train_opts_from(const std::map<std::string, std::string>& cfg,
                          std::uint64_t seed_flag, int epochs_flag,
                          double lr_flag) {
    TrainOpts opts;
    opts.epochs = epochs_flag > 0 ? epochs_flag
                                  : int(cfg_num(cfg, "train.epochs", 2));
    opts.lr = lr_flag > 0 ? lr_flag : cfg_num(cfg, "train.lr", 1e-3);
    opts.batch_size = int(cfg_num(cfg, "train.batch_size", 16));
    opts.alpha = cfg_num(cfg, "train.alpha", 0.1);
    opts.control_scale = cfg_num(cfg, "train.control_scale", 1.0);
    opts.seed = seed_flag;
    opts.val_fraction = cfg_num(cfg, "train.val_fraction", 0.2);
    return opts;
}

DpoConfig dpo_config_from(const std::map<std::string, std::string>& cfg,
                          const NetConfig& nc) {
    DpoConfig d;
    d.beta = cfg_num(cfg, "dpo.beta", d.beta);
    const auto mode = cfg_str(cfg, "dpo.beta_mode", "constant");
    if (mode == "quadratic")
        d.beta_mode = BetaMode::Quadratic;
    else if (mode != "constant")
        throw std::runtime_error("dpo.beta_mode must be constant|quadratic");
    d.lora_rank = nc.lora_rank;
    d.stage1.range.lo = cfg_num(cfg, "dpo.stage1.lo", d.stage1.range.lo);
    d.stage1.range.hi = cfg_num(cfg, "dpo.stage1.hi", d.stage1.range.hi);
    d.stage1.learning_rate = cfg_num(cfg, "dpo.stage1.lr", d.stage1.learning_rate);
    d.stage1.epochs = int(cfg_num(cfg, "dpo.stage1.epochs", d.stage1.epochs));
    d.stage2.range.lo = cfg_num(cfg, "dpo.stage2.lo", d.stage2.range.lo);
    d.stage2.range.hi = cfg_num(cfg, "dpo.stage2.hi", d.stage2.range.hi);
    d.stage2.learning_rate = cfg_num(cfg, "dpo.stage2.lr", d.stage2.learning_rate);
    d.stage2.epochs = int(cfg_num(cfg, "dpo.stage2.epochs", d.stage2.epochs));
    return d;
}

AugRange parse_range(const std::string& s) {
    const auto colon = s.find(':');
    if (colon == std::string::npos)
        throw std::runtime_error("range must be lo:hi, e.g. 0.5:0.8");
    AugRange r{std::stod(s.substr(0, colon)), std::stod(s.substr(colon + 1))};
    r.validate();
    return r;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"colorflux: rectified-flow colorization with decoupled "
                 "structure/color training and progressive preference tuning"};
    app.require_subcommand(1);

    std::string config_path;
    std::string run_dir_flag;
    app.add_option("--config", config_path, "key=value config file");
    app.add_option("--run-dir", run_dir_flag,
                   "run directory (default: timestamped under $CFLX_RUN_ROOT)");

    // --- gen ---
    auto* gen = app.add_subcommand("gen", "generate a synthetic corpus");
    int gen_n = 200, gen_size = 16;
    std::uint64_t gen_seed = 0;
    std::string gen_out;
    gen->add_option("--n", gen_n, "number of images");
    gen->add_option("--size", gen_size, "image side length");
    gen->add_option("--seed", gen_seed, "palette seed");
    gen->add_option("--out", gen_out, "output directory")->required();

    // --- filter ---
    auto* filter = app.add_subcommand("filter", "filter a corpus directory");
    std::string filter_in, filter_out, filter_preset = "basic-color";
    filter->add_option("--in", filter_in, "corpus directory")->required();
    filter->add_option("--out", filter_out, "filtered corpus directory")->required();
    filter->add_option("--preset", filter_preset, "basic-color|dpo|none");

    // --- pairs ---
    auto* pairs = app.add_subcommand("pairs", "build preference triplets");
    std::string pairs_in, pairs_out, pairs_range = "0.5:0.8";
    std::uint64_t pairs_seed = 0;
    pairs->add_option("--in", pairs_in, "corpus directory")->required();
    pairs->add_option("--out", pairs_out, "triplet directory")->required();
    pairs->add_option("--range", pairs_range, "augmentation range lo:hi");
    pairs->add_option("--seed", pairs_seed, "chain sampling seed");

    // --- train ---
    auto* train = app.add_subcommand("train", "run one training stage");
    std::string train_stage, train_corpus, ckpt_in, ckpt_out, ref_policy = "fixed";
    std::uint64_t train_seed = 0;
    int train_epochs = 0;
    double train_lr = 0.0;
    train->add_option("--stage", train_stage,
                      "base|structure|basic-color|pro-dpo|sft|one-stage-dpo")
        ->required();
    train->add_option("--corpus", train_corpus, "corpus directory")->required();
    train->add_option("--ckpt-in", ckpt_in, "input checkpoint (stage prerequisite)");
    train->add_option("--ckpt-out", ckpt_out, "output checkpoint path");
    train->add_option("--seed", train_seed, "master seed");
    train->add_option("--epochs", train_epochs, "override config epochs");
    train->add_option("--lr", train_lr, "override config learning rate");
    train->add_option("--ref-policy", ref_policy, "fixed|rebase (dpo stages)");

    // --- colorize ---
    auto* colorize = app.add_subcommand("colorize", "colorize grayscale inputs");
    std::string col_input, col_ckpt, col_out, col_resize;
    int col_steps = 8;
    std::uint64_t col_seed = 0;
    colorize->add_option("--input", col_input, "input PNG file or directory")
        ->required();
    colorize->add_option("--ckpt", col_ckpt, "model checkpoint")->required();
    colorize->add_option("--out", col_out, "output directory");
    colorize->add_option("--steps", col_steps, "Euler steps (default 8)");
    colorize->add_option("--seed", col_seed, "noise seed (default 0)");
    colorize->add_option("--resize", col_resize, "bilinear|nearest resize-back");

    // --- eval ---
    auto* eval = app.add_subcommand("eval", "score a results directory");
    std::string eval_mode = "proxy", eval_outputs, eval_conditions, eval_endpoint;
    eval->add_option("--mode", eval_mode, "proxy|external");
    eval->add_option("--outputs", eval_outputs, "directory of colorized PNGs")
        ->required();
    eval->add_option("--conditions", eval_conditions,
                     "directory of matching grayscale conditions");
    eval->add_option("--endpoint", eval_endpoint, "external scorer base URL");

    // --- winrate ---
    auto* winrate = app.add_subcommand("winrate", "win rate from a ballot file");
    std::string ballots_path, method;
    winrate->add_option("--ballots", ballots_path, "tab-separated ballot file")
        ->required();
    winrate->add_option("--method", method, "method name")->required();

    // let --config / --run-dir appear after the subcommand as well
    for (CLI::App* sub : app.get_subcommands([](const CLI::App*) { return true; }))
        sub->fallthrough();

    CLI11_PARSE(app, argc, argv);

    try {
        std::map<std::string, std::string> cfg;
        if (!config_path.empty()) cfg = read_config(config_path);
        const NetConfig nc = net_config_from(cfg);

        if (gen->parsed()) {
            const auto run_dir = make_run_dir("gen", run_dir_flag);
            snapshot_config(config_path, run_dir);
            auto corpus = gen_synthetic_corpus(gen_n, gen_size, gen_seed);
            write_corpus(corpus, gen_out);
            Summary s;
            s.add("command", "gen");
            s.add("images", double(corpus.size()));
            s.add("out", gen_out);
            s.write(run_dir);
            return 0;
        }

        if (filter->parsed()) {
            const auto run_dir = make_run_dir("filter", run_dir_flag);
            snapshot_config(config_path, run_dir);
            FilterSpec spec = FilterSpec::preset(
                cfg.count("filter.preset") ? cfg.at("filter.preset") : filter_preset);
            spec.min_colorfulness =
                cfg_num(cfg, "filter.min_colorfulness", spec.min_colorfulness);
            spec.sat_lo = cfg_num(cfg, "filter.sat_lo", spec.sat_lo);
            spec.sat_hi = cfg_num(cfg, "filter.sat_hi", spec.sat_hi);
            spec.bright_lo = cfg_num(cfg, "filter.bright_lo", spec.bright_lo);
            spec.bright_hi = cfg_num(cfg, "filter.bright_hi", spec.bright_hi);

            auto corpus = load_corpus(filter_in);
            std::vector<Image8> imgs;
            for (const auto& ci : corpus) imgs.push_back(ci.img);
            auto result = filter_dataset(imgs, spec);

            std::vector<CorpusImage> kept;
            for (auto idx : result.kept) kept.push_back(corpus[idx]);
            write_corpus(kept, filter_out);

            std::ofstream report(fs::path(run_dir) / "filter_report.tsv");
            report << "index\tcolorfulness\tmean_saturation\tmean_brightness\tkept\n";
            for (const auto& r : result.reports)
                report << r.index << "\t" << r.colorfulness << "\t"
                       << r.mean_saturation << "\t" << r.mean_brightness << "\t"
                       << (r.kept ? 1 : 0) << "\n";

            Summary s;
            s.add("command", "filter");
            s.add("input_images", double(imgs.size()));
            s.add("kept", double(result.kept.size()));
            s.add("out", filter_out);
            s.write(run_dir);
            return 0;
        }

        if (pairs->parsed()) {
            const auto run_dir = make_run_dir("pairs", run_dir_flag);
            snapshot_config(config_path, run_dir);
            const auto range = parse_range(pairs_range);
            auto corpus = load_corpus(pairs_in);
            Rng rng = Rng::stream(pairs_seed, "cli.pairs");
            std::vector<Triplet> trips;
            for (const auto& ci : corpus) {
                auto t = build_triplet(ci.img, rng.next_u64(), range);
                t.label = ci.hue_class;
                trips.push_back(std::move(t));
            }
            const auto manifest = write_triplets(pairs_out, trips);
            Summary s;
            s.add("command", "pairs");
            s.add("triplets", double(trips.size()));
            s.add("range_lo", range.lo);
            s.add("range_hi", range.hi);
            s.add("manifest", manifest);
            s.write(run_dir);
            return 0;
        }

        if (train->parsed()) {
            const auto run_dir = make_run_dir("train-" + train_stage, run_dir_flag);
            snapshot_config(config_path, run_dir);
            auto corpus = load_corpus(train_corpus);
            TrainOpts opts = train_opts_from(cfg, train_seed, train_epochs, train_lr);
            opts.log_path = (fs::path(run_dir) / "train.log").string();
            if (ckpt_out.empty())
                ckpt_out = (fs::path(run_dir) / (train_stage + ".ckpt")).string();

            StageResult result;
            if (train_stage == "base") {
                auto init = ckpt_in.empty() ? init_params(nc, opts.seed)
                                            : load_params(ckpt_in, nc);
                result = run_stage_base(init, corpus, opts);
            } else if (train_stage == "structure") {
                if (ckpt_in.empty())
                    throw std::runtime_error(
                        "stage 'structure' requires --ckpt-in from stage 'base'");
                require_stage(ckpt_in, "base", "structure");
                result = run_stage_structure(load_params(ckpt_in, nc), corpus, opts);
            } else if (train_stage == "basic-color") {
                if (ckpt_in.empty())
                    throw std::runtime_error("stage 'basic-color' requires "
                                             "--ckpt-in from stage 'structure'");
                require_stage(ckpt_in, "structure", "basic-color");
                result =
                    run_stage_basic_color(load_params(ckpt_in, nc), corpus, opts);
            } else if (train_stage == "pro-dpo" || train_stage == "sft" ||
                       train_stage == "one-stage-dpo") {
                if (ckpt_in.empty())
                    throw std::runtime_error("stage '" + train_stage +
                                             "' requires --ckpt-in from stage "
                                             "'basic-color'");
                require_stage(ckpt_in, "basic-color", train_stage);
                const DpoMode mode = train_stage == "pro-dpo" ? DpoMode::Progressive
                                     : train_stage == "sft"   ? DpoMode::Sft
                                                              : DpoMode::OneStage;
                const RefPolicy rp =
                    cfg_str(cfg, "dpo.ref_policy", ref_policy) == "rebase"
                        ? RefPolicy::Rebase
                        : RefPolicy::Fixed;
                std::vector<Image8> gts;
                for (const auto& ci : corpus) gts.push_back(ci.img);
                TrainOpts dopts = opts;
                dopts.lr = train_lr;  // 0 keeps the published schedule rates
                result = run_stage_pro_dpo(load_params(ckpt_in, nc), gts,
                                           dpo_config_from(cfg, nc), mode, rp,
                                           dopts);
            } else {
                throw std::runtime_error("unknown stage: " + train_stage);
            }

            save_checkpoint_atomic(result.params, ckpt_out);
            write_stage_meta(ckpt_out, train_stage == "sft" ||
                                               train_stage == "one-stage-dpo"
                                           ? train_stage
                                           : train_stage);

            Summary s;
            s.add("command", "train");
            s.add("stage", train_stage);
            s.add("checkpoint", ckpt_out);
            if (!result.epoch_train_loss.empty()) {
                s.add("first_epoch_train_loss", result.epoch_train_loss.front());
                s.add("last_epoch_train_loss", result.epoch_train_loss.back());
            }
            if (!result.epoch_val_loss.empty())
                s.add("last_epoch_val_loss", result.epoch_val_loss.back());
            s.write(run_dir);
            return 0;
        }

        if (colorize->parsed()) {
            const auto run_dir = make_run_dir("colorize", run_dir_flag);
            snapshot_config(config_path, run_dir);
            auto params = load_params(col_ckpt);
            const int size = params.cfg.image_size;
            const int steps =
                col_steps > 0 ? col_steps : int(cfg_num(cfg, "sample.steps", 8));
            const std::string resize_mode =
                !col_resize.empty() ? col_resize
                                    : cfg_str(cfg, "sample.resize", "bilinear");
            if (resize_mode != "bilinear" && resize_mode != "nearest")
                throw std::runtime_error("--resize must be bilinear|nearest");
            if (col_out.empty()) col_out = (fs::path(run_dir) / "out").string();
            fs::create_directories(col_out);

            std::vector<fs::path> inputs;
            if (fs::is_directory(col_input)) {
                for (const auto& e : fs::directory_iterator(col_input))
                    if (e.path().extension() == ".png") inputs.push_back(e.path());
                std::sort(inputs.begin(), inputs.end());
            } else {
                inputs.push_back(col_input);
            }
            if (inputs.empty())
                throw std::runtime_error("no PNG inputs found in " + col_input);

            // Inert metadata mirrors the published inference settings.
            {
                std::ofstream meta(fs::path(run_dir) / "inference.meta");
                meta << "steps=" << steps << "\nseed=" << col_seed
                     << "\nguidance_scale=3.5\ncontrol_scale=1\nresize="
                     << resize_mode << "\n";
            }

            int done = 0;
            for (const auto& in_path : inputs) {
                auto img = read_png(in_path.string());
                // 1-channel input is the condition directly; RGB is grayed.
                Image8 cond_native = img.channels == 1 ? img : rgb_to_gray(img);
                auto cond_small = resize_image(cond_native, size, size, resize_mode);
                auto condf = to_float(cond_small);
                Rng rng = Rng::stream(col_seed, "cli.colorize." +
                                                    in_path.filename().string());
                ImageF shape(size, size, 3);
                auto noise = gaussian_like(shape, rng);
                auto prompt = prompt_encode(params.phi, params.cfg,
                                            replicate3(condf));
                auto sample =
                    euler_sample(params, condf, prompt, noise, steps, 1.0, false);
                auto out_small = from_float(sample);
                auto out = resize_image(out_small, cond_native.width,
                                        cond_native.height, resize_mode);
                write_png((fs::path(col_out) / in_path.filename()).string(), out);
                ++done;
            }

            Summary s;
            s.add("command", "colorize");
            s.add("images", double(done));
            s.add("steps", double(steps));
            s.add("seed", double(col_seed));
            s.add("out", col_out);
            s.write(run_dir);
            return 0;
        }

        if (eval->parsed()) {
            const auto run_dir = make_run_dir("eval", run_dir_flag);
            snapshot_config(config_path, run_dir);
            std::vector<fs::path> outputs;
            for (const auto& e : fs::directory_iterator(eval_outputs))
                if (e.path().extension() == ".png") outputs.push_back(e.path());
            std::sort(outputs.begin(), outputs.end());
            if (outputs.empty())
                throw std::runtime_error("no PNG outputs in " + eval_outputs);

            std::vector<AspectScores> scores;
            std::ofstream records(fs::path(run_dir) / "scores.tsv");
            records << "item";
            for (const char* a : kAspectNames) records << "\t" << a;
            records << "\n";
            for (const auto& out_path : outputs) {
                auto out_img = read_png(out_path.string());
                AspectScores sc;
                if (eval_mode == "proxy") {
                    Image8 cond;
                    const auto cond_path =
                        fs::path(eval_conditions) / out_path.filename();
                    if (!eval_conditions.empty() && fs::exists(cond_path)) {
                        cond = read_png(cond_path.string());
                        if (cond.channels != 1) cond = rgb_to_gray(cond);
                    } else {
                        cond = rgb_to_gray(out_img);
                    }
                    sc = proxy_scores(cond, out_img);
                } else if (eval_mode == "external") {
                    EndpointConfig ecfg;
                    ecfg.base_url = eval_endpoint;
                    if (ecfg.base_url.empty())
                        throw std::runtime_error(
                            "--endpoint required in external mode");
                    sc = external_score(out_img, nullptr, ecfg,
                                        default_score_template())
                             .scores;
                } else {
                    throw std::runtime_error("--mode must be proxy|external");
                }
                scores.push_back(sc);
                records << out_path.filename().string();
                for (int i = 0; i < 6; ++i) {
                    records << "\t";
                    if (sc.valid[i]) records << sc.scores[i];
                }
                records << "\n";
            }

            auto table = aggregate(scores);
            std::cout << "aspect\tmean\tstddev\tcount\n";
            Summary s;
            s.add("command", "eval");
            s.add("mode", eval_mode);
            s.add("images", double(scores.size()));
            for (int i = 0; i < 6; ++i) {
                std::cout << kAspectNames[i] << "\t" << table[i].mean << "\t"
                          << table[i].stddev << "\t" << table[i].count << "\n";
                if (table[i].count > 0)
                    s.add(std::string("mean_") + kAspectNames[i], table[i].mean);
            }
            s.write(run_dir);
            return 0;
        }

        if (winrate->parsed()) {
            const auto run_dir = make_run_dir("winrate", run_dir_flag);
            snapshot_config(config_path, run_dir);
            const auto ballots = read_ballots(ballots_path);
            const double rate = win_rate(ballots, method);
            Summary s;
            s.add("command", "winrate");
            s.add("method", method);
            s.add("ballots", double(ballots.size()));
            s.add("win_rate", rate);
            s.write(run_dir);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
