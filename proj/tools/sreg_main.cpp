// Command-line surface of the registration toolkit.
//
// Exit codes: 0 success, 2 invalid input, 3 optimization divergence,
// 4 theory-bound violation.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "sreg/bounds.hpp"
#include "sreg/gradcheck_suite.hpp"
#include "sreg/io.hpp"
#include "sreg/metrics.hpp"
#include "sreg/registrator.hpp"
#include "sreg/synth.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitBoundViolation = 4;

std::string fmt(double v) { return sreg::format_double(v); }

int cmd_gen(const std::string& shape_text, int pairs, double magnitude, double smoothness,
            uint64_t seed, const std::string& out) {
    if (!(magnitude > 0.0)) {
        std::cerr << "gen: degenerate magnitude " << magnitude
                  << " (must be positive so the beta heuristic stays valid)\n";
        return kExitInput;
    }
    const sreg::GridShape shape = sreg::parse_shape(shape_text);
    const sreg::DatasetManifest manifest =
        sreg::write_dataset(out, shape, pairs, magnitude, smoothness, seed);
    std::cout << "wrote " << manifest.pairs << " pairs to " << out << " (hash " << manifest.hash
              << ")\n";
    return kExitOk;
}

std::vector<sreg::TrainPair> load_train_pairs(const fs::path& dir) {
    const sreg::DatasetManifest manifest = sreg::read_manifest(dir);
    std::vector<sreg::TrainPair> pairs;
    for (const std::string& name : manifest.pair_dirs) {
        sreg::LoadedPair p = sreg::load_pair(dir / name);
        pairs.push_back(sreg::TrainPair{std::move(p.moving), std::move(p.fixed)});
    }
    return pairs;
}

void write_training_log(const fs::path& path, const std::string& hash,
                        const std::vector<sreg::EpochLog>& log) {
    sreg::CsvWriter csv(path, hash,
                        {"epoch", "sim", "reg", "self", "cross", "total", "sse", "cse",
                         "violator_fraction"});
    for (const sreg::EpochLog& e : log)
        csv.row({std::to_string(e.epoch), fmt(e.loss.sim), fmt(e.loss.reg),
                 fmt(e.loss.self_sanity), fmt(e.loss.cross), fmt(e.loss.total), fmt(e.sse),
                 fmt(e.cse), fmt(e.violator_fraction)});
    csv.finish();
}

int cmd_train(const std::string& config_path, const std::string& data_override,
              const std::string& out_override) {
    sreg::RunConfig cfg = sreg::parse_config_file(config_path);
    if (!data_override.empty())
        cfg.data_dir = data_override;
    if (!out_override.empty())
        cfg.out_dir = out_override;
    if (cfg.data_dir.empty() || cfg.out_dir.empty()) {
        std::cerr << "train: config must provide data_dir and out_dir\n";
        return kExitInput;
    }
    const std::string hash = sreg::config_hash(cfg);
    const std::vector<sreg::TrainPair> pairs = load_train_pairs(cfg.data_dir);
    if (pairs.empty()) {
        std::cerr << "train: dataset is empty\n";
        return kExitInput;
    }
    sreg::TrainOptions opt;
    opt.epochs = cfg.epochs;
    opt.learning_rate = cfg.effective_learning_rate();
    opt.seed = cfg.seed;
    opt.backproject_coord_grad = cfg.backproject_coord_grad;

    const sreg::TrainResult result = sreg::train_model(pairs, cfg.sanity, opt);
    fs::create_directories(cfg.out_dir);
    sreg::save_checkpoint(fs::path(cfg.out_dir) / "checkpoint.sregckpt", result.model,
                          pairs[0].moving.shape, hash);
    write_training_log(fs::path(cfg.out_dir) / "training_log.csv", hash, result.log);
    if (result.diverged_at_step) {
        std::cerr << "train: loss diverged at step " << *result.diverged_at_step
                  << "; last good checkpoint retained\n";
        return kExitDivergence;
    }
    std::cout << "trained " << cfg.epochs << " epochs over " << pairs.size()
              << " pairs; checkpoint written to " << cfg.out_dir << "\n";
    return kExitOk;
}

int cmd_register(const std::string& moving_path, const std::string& fixed_path,
                 const std::string& checkpoint_path, bool direct,
                 const std::string& config_path, const std::string& out) {
    sreg::RunConfig cfg;
    if (!config_path.empty())
        cfg = sreg::parse_config_file(config_path);
    const std::string hash = sreg::config_hash(cfg);
    const sreg::ImageVolume moving = sreg::read_image(moving_path);
    const sreg::ImageVolume fixed = sreg::read_image(fixed_path);
    fs::create_directories(out);

    sreg::DisplacementField g_mf, g_fm;
    if (direct) {
        sreg::DirectOptions opt;
        opt.steps = cfg.steps;
        opt.learning_rate = cfg.backend == "direct" ? cfg.effective_learning_rate() : 0.1;
        opt.similarity =
            cfg.similarity == "ssd" ? sreg::Similarity::kSsd : sreg::Similarity::kNcc;
        opt.backproject_coord_grad = cfg.backproject_coord_grad;
        const sreg::PairResult result =
            sreg::register_pair_direct(moving, fixed, cfg.sanity, opt);
        g_mf = result.g_mf;
        g_fm = result.g_fm;
    } else {
        const sreg::Checkpoint ckpt = sreg::load_checkpoint(checkpoint_path);
        g_mf = sreg::infer(ckpt.net, moving, fixed);
        g_fm = sreg::infer(ckpt.net, fixed, moving);
    }
    sreg::write_field(fs::path(out) / "g_mf.sreg", g_mf);
    sreg::write_field(fs::path(out) / "g_fm.sreg", g_fm);
    std::cout << "wrote displacement fields to " << out << "\n";
    return kExitOk;
}

struct Accumulator {
    std::vector<double> values;
    void add(double v) { values.push_back(v); }
    double mean() const {
        double s = 0.0;
        for (double v : values)
            s += v;
        return values.empty() ? 0.0 : s / static_cast<double>(values.size());
    }
    double stddev() const {
        if (values.empty())
            return 0.0;
        const double m = mean();
        double s = 0.0;
        for (double v : values)
            s += (v - m) * (v - m);
        return std::sqrt(s / static_cast<double>(values.size()));
    }
};

int cmd_eval(const std::string& pairs_dir, const std::string& checkpoint_path,
             const std::string& config_path, const std::string& out_path) {
    sreg::RunConfig cfg;
    if (!config_path.empty())
        cfg = sreg::parse_config_file(config_path);
    const std::string hash = sreg::config_hash(cfg);
    const sreg::Checkpoint ckpt = sreg::load_checkpoint(checkpoint_path);
    const sreg::DatasetManifest manifest = sreg::read_manifest(pairs_dir);

    const std::vector<std::string> columns{"pair", "dice",   "sdice", "hd95", "fv",
                                           "aj",   "sdlogj", "tre",   "stre", "rob",
                                           "sse",  "cse",    "cice"};
    sreg::CsvWriter csv(out_path, hash, columns);
    std::vector<Accumulator> acc(columns.size() - 1);
    for (const std::string& name : manifest.pair_dirs) {
        const sreg::LoadedPair p = sreg::load_pair(fs::path(pairs_dir) / name);
        const sreg::DisplacementField g_mf = sreg::infer(ckpt.net, p.moving, p.fixed);
        const sreg::DisplacementField g_fm = sreg::infer(ckpt.net, p.fixed, p.moving);
        const sreg::DisplacementField g_mm = sreg::infer(ckpt.net, p.moving, p.moving);
        const sreg::DisplacementField g_ff = sreg::infer(ckpt.net, p.fixed, p.fixed);

        sreg::MetricsReport r;
        const sreg::LabelVolume warped = sreg::warp_labels(p.moving_labels, g_mf);
        r.dice = sreg::dice(warped, p.fixed_labels);
        r.sdice = sreg::sdice(ckpt.net, p.moving, p.moving_labels);
        r.hd95 = sreg::hd95(warped, p.fixed_labels);
        const sreg::FoldingMetrics fold = sreg::folding_metrics(g_mf);
        r.fv = fold.fv;
        r.aj = fold.aj;
        r.sdlogj = fold.sdlogj;
        const sreg::LandmarkMetrics lm =
            sreg::landmark_metrics(p.landmarks, g_mf, g_mm, cfg.sanity.spacing);
        r.tre = lm.tre;
        r.stre = lm.stre;
        r.rob = lm.rob;
        const sreg::SanityMetrics sm = sreg::sanity_metrics(g_mf, g_fm, g_mm, g_ff, cfg.sanity);
        r.sse = sm.sse;
        r.cse = sm.cse;
        r.cice = sreg::cice(g_mf, g_fm);

        const std::vector<double> row{r.dice, r.sdice, r.hd95, r.fv,  r.aj,  r.sdlogj,
                                      r.tre,  r.stre,  r.rob,  r.sse, r.cse, r.cice};
        std::vector<std::string> cells{name};
        for (size_t i = 0; i < row.size(); ++i) {
            cells.push_back(fmt(row[i]));
            acc[i].add(row[i]);
        }
        csv.row(cells);
    }
    std::vector<std::string> mean_row{"mean"}, std_row{"std"};
    for (const Accumulator& a : acc) {
        mean_row.push_back(fmt(a.mean()));
        std_row.push_back(fmt(a.stddev()));
    }
    csv.row(mean_row);
    csv.row(std_row);
    csv.finish();
    std::cout << "wrote metrics for " << manifest.pair_dirs.size() << " pairs to " << out_path
              << "\n";
    return kExitOk;
}

int cmd_verify_bounds(int trials, double alpha, double beta, const std::string& shape_text,
                      uint64_t seed, const std::string& out_path) {
    sreg::RunConfig cfg;
    cfg.sanity.alpha = alpha;
    cfg.sanity.beta = beta;
    cfg.shape = shape_text;
    cfg.seed = seed;
    const std::string hash = sreg::config_hash(cfg);
    const sreg::GridShape shape = sreg::parse_shape(shape_text);
    cfg.sanity.validate();

    sreg::CsvWriter csv(out_path, hash,
                        {"trial", "check", "alpha", "beta", "n", "lhs", "rhs", "slack",
                         "satisfied"});
    int64_t violations = 0;
    for (int t = 0; t < trials; ++t) {
        const uint64_t s = seed + static_cast<uint64_t>(t);
        const sreg::SampledPair pair = sreg::sample_satisfying_pair(shape, cfg.sanity, s);
        const sreg::BoundReport r1 =
            sreg::verify_relaxation_bound(pair.g, pair.g_tilde, cfg.sanity);
        csv.row({std::to_string(t), r1.context, fmt(r1.alpha), fmt(r1.beta),
                 std::to_string(r1.voxels), fmt(r1.lhs), fmt(r1.rhs), fmt(r1.slack),
                 r1.satisfied ? "1" : "0"});
        if (!r1.satisfied)
            ++violations;

        const sreg::SampledDirectionalPair dpair =
            sreg::sample_satisfying_directional_pair(shape, cfg.sanity, s ^ 0xabcdef12345ull);
        const sreg::BoundReport r2 = sreg::verify_cs_bound(dpair.g_mf, dpair.g_fm, cfg.sanity);
        csv.row({std::to_string(t), r2.context, fmt(r2.alpha), fmt(r2.beta),
                 std::to_string(r2.voxels), fmt(r2.lhs), fmt(r2.rhs), fmt(r2.slack),
                 r2.satisfied ? "1" : "0"});
        if (!r2.satisfied)
            ++violations;
    }
    csv.finish();
    if (violations > 0) {
        std::cerr << "verify-bounds: " << violations << " bound violation(s) detected\n";
        return kExitBoundViolation;
    }
    std::cout << "verify-bounds: " << trials << " trials, zero violations\n";
    return kExitOk;
}

int cmd_gradcheck(int seeds) {
    const std::vector<sreg::GradCheckCase> cases =
        sreg::run_gradcheck_suite(seeds, /*base_seed=*/20240801);
    bool ok = true;
    for (const sreg::GradCheckCase& c : cases) {
        std::printf("%-16s max_rel_error=%.3e threshold=%.0e %s\n", c.name.c_str(),
                    c.max_rel_error, c.threshold, c.pass ? "ok" : "FAIL");
        ok = ok && c.pass;
    }
    return ok ? kExitOk : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"sanity-checked deformable registration toolkit"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "generate a synthetic benchmark dataset");
    std::string gen_shape = "64x64", gen_out = "dataset";
    int gen_pairs = 4;
    double gen_magnitude = 2.0, gen_smoothness = 8.0;
    uint64_t gen_seed = 0;
    gen->add_option("--shape", gen_shape, "grid extents, e.g. 64x64");
    gen->add_option("--pairs", gen_pairs, "number of pairs");
    gen->add_option("--magnitude", gen_magnitude, "max displacement magnitude (voxels)");
    gen->add_option("--smoothness", gen_smoothness, "gaussian sigma of the deformation");
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--out", gen_out, "output directory")->required();

    // train
    auto* train = app.add_subcommand("train", "train the tiny regressor on a dataset");
    std::string train_config, train_data, train_out;
    train->add_option("--config", train_config, "run configuration file")->required();
    train->add_option("--data", train_data, "override data_dir");
    train->add_option("--out", train_out, "override out_dir");

    // register
    auto* reg = app.add_subcommand("register", "register one pair");
    std::string reg_moving, reg_fixed, reg_ckpt, reg_config, reg_out = "registered";
    bool reg_direct = false;
    reg->add_option("--moving", reg_moving, "moving image (SREG1)")->required();
    reg->add_option("--fixed", reg_fixed, "fixed image (SREG1)")->required();
    reg->add_option("--checkpoint", reg_ckpt, "trained checkpoint");
    reg->add_flag("--direct", reg_direct, "optimize the pair directly");
    reg->add_option("--config", reg_config, "run configuration file");
    reg->add_option("--out", reg_out, "output directory");

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    std::string eval_pairs, eval_ckpt, eval_config, eval_out = "metrics.csv";
    eval->add_option("--pairs", eval_pairs, "dataset directory")->required();
    eval->add_option("--checkpoint", eval_ckpt, "trained checkpoint")->required();
    eval->add_option("--config", eval_config, "run configuration file");
    eval->add_option("--out", eval_out, "output CSV");

    // verify-bounds
    auto* vb = app.add_subcommand("verify-bounds", "sample pairs and check the theory bounds");
    int vb_trials = 1000;
    double vb_alpha = 0.1, vb_beta = 10.0;
    std::string vb_shape = "8x8", vb_out = "bounds.csv";
    uint64_t vb_seed = 0;
    vb->add_option("--trials", vb_trials, "number of sampled pairs");
    vb->add_option("--alpha", vb_alpha, "relaxation slope");
    vb->add_option("--beta", vb_beta, "relaxation intercept");
    vb->add_option("--shape", vb_shape, "grid extents");
    vb->add_option("--seed", vb_seed, "sampler seed");
    vb->add_option("--out", vb_out, "output CSV");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every loss term");
    int gc_seeds = 20;
    gc->add_option("--seeds", gc_seeds, "randomized instances per case");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitInput;
    }

    try {
        if (gen->parsed())
            return cmd_gen(gen_shape, gen_pairs, gen_magnitude, gen_smoothness, gen_seed,
                           gen_out);
        if (train->parsed())
            return cmd_train(train_config, train_data, train_out);
        if (reg->parsed()) {
            if (reg_direct == !reg_ckpt.empty()) {
                std::cerr << "register: provide exactly one of --checkpoint or --direct\n";
                return kExitInput;
            }
            return cmd_register(reg_moving, reg_fixed, reg_ckpt, reg_direct, reg_config,
                                reg_out);
        }
        if (eval->parsed())
            return cmd_eval(eval_pairs, eval_ckpt, eval_config, eval_out);
        if (vb->parsed())
            return cmd_verify_bounds(vb_trials, vb_alpha, vb_beta, vb_shape, vb_seed, vb_out);
        if (gc->parsed())
            return cmd_gradcheck(gc_seeds);
    } catch (const sreg::DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const sreg::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
    return kExitInput;
}
