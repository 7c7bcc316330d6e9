#include <CLI11.hpp>
#include <iostream>

#include "parallax/eval/metrics.hpp"
#include "parallax/io/config.hpp"
#include "parallax/io/dataset.hpp"
#include "parallax/io/visualize.hpp"
#include "parallax/train/trainer.hpp"

namespace parallax {
namespace {

const std::vector<std::string> kAllowedKeys = {
    "seed",        "steps",       "dataset",     "checkpoint",
    "out",         "mode",        "refine_steps", "median_scale",
    "cap",         "lr",          "batch_size",  "w_l1",
    "w_ssim",      "w_smooth",    "w_size",      "l2_reg",
    "count",       "preset",      "height",      "width",
    "n_frames",    "refine_lr",   "static_skip_threshold",
    "flip_augmentation"};

// Flag values layered over the config file; unknown keys are rejected.
struct FlagSet {
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;

    void add(const std::string& key, const std::string& value) {
        overrides.emplace_back(key, value);
    }

    KeyValueConfig resolve() const {
        KeyValueConfig cfg;
        if (!config_path.empty()) cfg = KeyValueConfig::from_file(config_path);
        for (const auto& [k, v] : overrides) cfg.set(k, v);
        cfg.reject_unknown_keys(kAllowedKeys);
        return cfg;
    }
};

LossWeights weights_from(const KeyValueConfig& cfg) {
    LossWeights w;
    w.l1 = cfg.get_double("w_l1", w.l1);
    w.ssim = cfg.get_double("w_ssim", w.ssim);
    w.smooth = cfg.get_double("w_smooth", w.smooth);
    w.size_constraint = cfg.get_double("w_size", w.size_constraint);
    w.l2_reg = cfg.get_double("l2_reg", w.l2_reg);
    return w;
}

std::string require(const KeyValueConfig& cfg, const std::string& key) {
    const std::string v = cfg.get_string(key, "");
    check(!v.empty(), "missing required option --" + key);
    return v;
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

void cmd_generate(const KeyValueConfig& cfg) {
    const fs::path out = require(cfg, "out");
    const uint64_t seed = static_cast<uint64_t>(cfg.get_int("seed", 1));
    const int count = static_cast<int>(cfg.get_int("count", 20));
    const std::string preset = cfg.get_string("preset", "rigid");
    SceneConfig scfg;
    scfg.height = static_cast<int>(cfg.get_int("height", scfg.height));
    scfg.width = static_cast<int>(cfg.get_int("width", scfg.width));

    std::vector<SceneSample> samples;
    bool sequence = false;
    if (preset == "sequence") {
        const int n_frames = static_cast<int>(cfg.get_int("n_frames", count + 2));
        samples = generate_sequence(seed, scfg, n_frames);
        sequence = true;
    } else {
        for (int i = 0; i < count; ++i) {
            const uint64_t s = seed + static_cast<uint64_t>(i) * 100;
            if (preset == "rigid") {
                samples.push_back(generate_rigid(s, scfg));
            } else if (preset == "dynamic") {
                samples.push_back(generate_dynamic(s, scfg));
            } else if (preset == "degenerate") {
                SceneConfig d = scfg;
                d.degenerate_preset = true;
                samples.push_back(generate_dynamic(s, d));
            } else if (preset == "mixed") {
                SceneConfig d = scfg;
                d.degenerate_preset = i % 2 == 1;
                samples.push_back(generate_dynamic(s, d));
            } else {
                fail("generate: unknown preset '" + preset +
                     "' (rigid|dynamic|degenerate|mixed|sequence)");
            }
        }
    }
    save_dataset(out, samples, sequence);
    std::cout << "wrote " << samples.size() << " samples to " << out.string() << "\n";
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

void cmd_train(const KeyValueConfig& cfg) {
    const fs::path dataset_path = require(cfg, "dataset");
    const fs::path out = require(cfg, "out");
    TrainConfig tc;
    tc.learning_rate = cfg.get_double("lr", tc.learning_rate);
    tc.weights = weights_from(cfg);
    tc.batch_size = static_cast<int>(cfg.get_int("batch_size", tc.batch_size));
    tc.steps = static_cast<int>(cfg.get_int("steps", 1000));
    tc.seed = static_cast<uint64_t>(cfg.get_int("seed", 1));
    const std::string mode = cfg.get_string("mode", "baseline");
    check(mode == "baseline" || mode == "motion", "train: mode must be baseline or motion");
    tc.mode = mode == "motion" ? TrainConfig::Mode::motion : TrainConfig::Mode::baseline;

    std::vector<SceneSample> data = load_dataset(dataset_path);
    Models models(tc.mode, tc.seed);
    const std::string csv = train(models, data, tc, [](int step, const StepStats& s) {
        if (step % 100 == 0) std::cout << "step " << step << " loss " << s.total << "\n";
    });
    fs::create_directories(out);
    models.save((out / "checkpoint.ckpt").string());
    std::ofstream curve(out / "loss_curve.csv");
    curve << csv;
    check(curve.good(), "train: cannot write loss curve");
    std::cout << "checkpoint " << (out / "checkpoint.ckpt").string() << "\n";
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalRow {
    std::string name;
    DepthMetrics metrics;
};

DepthMetrics mean_metrics(const std::vector<EvalRow>& rows) {
    DepthMetrics m;
    for (const EvalRow& r : rows) {
        m.abs_rel += r.metrics.abs_rel;
        m.sq_rel += r.metrics.sq_rel;
        m.rmse += r.metrics.rmse;
        m.rmse_log += r.metrics.rmse_log;
        m.d1 += r.metrics.d1;
        m.d2 += r.metrics.d2;
        m.d3 += r.metrics.d3;
    }
    const double n = static_cast<double>(rows.size());
    m.abs_rel /= n;
    m.sq_rel /= n;
    m.rmse /= n;
    m.rmse_log /= n;
    m.d1 /= n;
    m.d2 /= n;
    m.d3 /= n;
    return m;
}

void write_metrics_csv(const fs::path& path, const std::vector<EvalRow>& rows) {
    check(!rows.empty(), "eval: no samples with ground-truth depth");
    std::ofstream f(path);
    f << "sample," << depth_metrics_csv_header() << "\n";
    for (const EvalRow& r : rows) f << r.name << ',' << depth_metrics_csv_row(r.metrics) << "\n";
    f << "mean," << depth_metrics_csv_row(mean_metrics(rows)) << "\n";
    check(f.good(), "eval: cannot write " + path.string());
}

void write_depth_outputs(const fs::path& out, const std::string& prefix, int index,
                         const Tensor& depth, const Tensor& input_frame) {
    std::ostringstream idx;
    idx << std::setw(5) << std::setfill('0') << index;
    write_pfm((out / (prefix + "_" + idx.str() + ".pfm")).string(), depth);
    write_depth_gray((out / (prefix + "_" + idx.str() + "_gray.pgm")).string(), depth);
    write_depth_color((out / (prefix + "_" + idx.str() + "_color.ppm")).string(), depth);
    if (input_frame.defined())
        write_ppm((out / ("input_" + idx.str() + ".ppm")).string(), input_frame);
}

// Chains per-window relative poses into full-trajectory relatives: E12 of
// every window plus the final window's E23.
std::vector<Pose4x4> sequence_relatives(const std::vector<SE3Params>& e12,
                                        const std::vector<SE3Params>& e23) {
    std::vector<Pose4x4> rel;
    for (const SE3Params& e : e12) rel.push_back(se3_to_matrix(e));
    rel.push_back(se3_to_matrix(e23.back()));
    return rel;
}

std::vector<std::vector<Pose4x4>> five_frame_snippets(const std::vector<Pose4x4>& rel) {
    std::vector<std::vector<Pose4x4>> snippets;
    for (size_t j = 0; j + 4 <= rel.size(); ++j)
        snippets.push_back({rel[j], rel[j + 1], rel[j + 2], rel[j + 3]});
    return snippets;
}

void cmd_eval(const KeyValueConfig& cfg) {
    const fs::path dataset_path = require(cfg, "dataset");
    const fs::path checkpoint = require(cfg, "checkpoint");
    const fs::path out = require(cfg, "out");
    const bool median_scale = cfg.get_bool("median_scale", true);
    const double cap = cfg.get_double("cap", 80.0);

    Models models = Models::load(checkpoint.string());
    Dataset ds = load_dataset_info(dataset_path);
    check(!ds.samples.empty(), "eval: empty dataset");
    fs::create_directories(out);

    std::vector<EvalRow> rows;
    std::vector<SE3Params> pred_e12, pred_e23, gt_e12, gt_e23;
    for (size_t i = 0; i < ds.samples.size(); ++i) {
        const SceneSample& s = ds.samples[i];
        Tensor depth = predict_depth(models, s.triplet.frames[1]);
        write_depth_outputs(out, "pred", static_cast<int>(i), depth, s.triplet.frames[1]);
        if (s.gt_depth[1].defined()) {
            EvalRow row;
            row.name = sample_dir_name(static_cast<int>(i));
            row.metrics = depth_metrics(depth, s.gt_depth[1], Tensor(), cap, median_scale);
            rows.push_back(row);
        }
        const bool use_masks = models.has_object_model() && s.triplet.has_masks();
        Tensor v = use_masks ? ego_input_mask(s.triplet.masks.maps[0], s.triplet.masks.maps[1],
                                              s.triplet.masks.maps[2])
                             : Tensor::full({s.triplet.height(), s.triplet.width()}, 1.0);
        auto [e12, e23] = estimate_ego(s.triplet.frames[0], s.triplet.frames[1],
                                       s.triplet.frames[2], v, models.ego);
        pred_e12.push_back(SE3Params::from_tensor(e12));
        pred_e23.push_back(SE3Params::from_tensor(e23));
        gt_e12.push_back(s.gt_ego12);
        gt_e23.push_back(s.gt_ego23);
    }
    write_metrics_csv(out / "metrics.csv", rows);

    if (ds.sequence && ds.samples.size() >= 3) {
        auto pred_rel = sequence_relatives(pred_e12, pred_e23);
        auto gt_rel = sequence_relatives(gt_e12, gt_e23);
        std::vector<double> per_snippet;
        OdometrySummary summary =
            odometry_ate(five_frame_snippets(pred_rel), five_frame_snippets(gt_rel), &per_snippet);
        std::ofstream odo(out / "odometry.csv");
        odo << "snippet_index,ate\n";
        odo.precision(10);
        for (size_t j = 0; j < per_snippet.size(); ++j) odo << j << ',' << per_snippet[j] << "\n";
        std::ofstream osum(out / "odometry_summary.csv");
        osum.precision(10);
        osum << "mean,std\n" << summary.mean << ',' << summary.stddev << "\n";
        check(odo.good() && osum.good(), "eval: cannot write odometry CSVs");
    }
    std::cout << "metrics " << (out / "metrics.csv").string() << "\n";
}

// ---------------------------------------------------------------------------
// refine
// ---------------------------------------------------------------------------

void cmd_refine(const KeyValueConfig& cfg) {
    const fs::path dataset_path = require(cfg, "dataset");
    const fs::path checkpoint = require(cfg, "checkpoint");
    const fs::path out = require(cfg, "out");
    RefineConfig rc;
    rc.steps = static_cast<int>(cfg.get_int("refine_steps", rc.steps));
    rc.learning_rate = cfg.get_double("refine_lr", cfg.get_double("lr", rc.learning_rate));
    rc.weights = weights_from(cfg);
    rc.static_skip_threshold = cfg.get_double("static_skip_threshold", rc.static_skip_threshold);
    rc.flip_augmentation = cfg.get_bool("flip_augmentation", rc.flip_augmentation);
    const bool median_scale = cfg.get_bool("median_scale", true);
    const double cap = cfg.get_double("cap", 80.0);

    Models models = Models::load(checkpoint.string());
    Dataset ds = load_dataset_info(dataset_path);
    check(!ds.samples.empty(), "refine: empty dataset");
    fs::create_directories(out);

    RefineOutputs ro = online_refine(models, ds.samples, rc);

    std::vector<EvalRow> refined_rows, unrefined_rows;
    std::ofstream log(out / "refine_log.csv");
    log << "sample,skipped_static\n";
    for (size_t i = 0; i < ds.samples.size(); ++i) {
        const SceneSample& s = ds.samples[i];
        write_depth_outputs(out, "refined", static_cast<int>(i), ro.refined_depth[i],
                            s.triplet.frames[1]);
        write_depth_outputs(out, "unrefined", static_cast<int>(i), ro.unrefined_depth[i], Tensor());
        log << sample_dir_name(static_cast<int>(i)) << ',' << (ro.skipped_static[i] ? 1 : 0)
            << "\n";
        if (!s.gt_depth[1].defined()) continue;
        EvalRow r;
        r.name = sample_dir_name(static_cast<int>(i));
        r.metrics = depth_metrics(ro.refined_depth[i], s.gt_depth[1], Tensor(), cap, median_scale);
        refined_rows.push_back(r);
        r.metrics = depth_metrics(ro.unrefined_depth[i], s.gt_depth[1], Tensor(), cap, median_scale);
        unrefined_rows.push_back(r);
    }
    if (!refined_rows.empty()) {
        write_metrics_csv(out / "refined_metrics.csv", refined_rows);
        write_metrics_csv(out / "unrefined_metrics.csv", unrefined_rows);
        std::cout << "refined abs_rel " << mean_metrics(refined_rows).abs_rel << " vs unrefined "
                  << mean_metrics(unrefined_rows).abs_rel << "\n";
    }
    check(log.good(), "refine: cannot write refine_log.csv");
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

DepthMetrics parse_mean_row(const fs::path& csv_path) {
    std::ifstream f(csv_path);
    check(f.good(), "report: cannot open " + csv_path.string());
    std::string line;
    check(static_cast<bool>(std::getline(f, line)) &&
              line == "sample," + depth_metrics_csv_header(),
          "report: unexpected header in " + csv_path.string());
    DepthMetrics m;
    bool found = false;
    while (std::getline(f, line)) {
        if (line.rfind("mean,", 0) != 0) continue;
        std::istringstream is(line.substr(5));
        char comma;
        is >> m.abs_rel >> comma >> m.sq_rel >> comma >> m.rmse >> comma >> m.rmse_log >> comma >>
            m.d1 >> comma >> m.d2 >> comma >> m.d3;
        check(!is.fail(), "report: bad mean row in " + csv_path.string());
        found = true;
    }
    check(found, "report: no mean row in " + csv_path.string());
    return m;
}

void cmd_report(const KeyValueConfig& cfg, const std::vector<std::string>& run_csvs) {
    check(!run_csvs.empty(), "report: provide at least one metrics CSV");
    std::vector<RunMetrics> runs;
    for (const std::string& path : run_csvs) {
        RunMetrics r;
        r.name = fs::path(path).parent_path().filename().string();
        if (r.name.empty()) r.name = path;
        r.depth = parse_mean_row(path);
        const fs::path odo = fs::path(path).parent_path() / "odometry_summary.csv";
        if (fs::exists(odo)) {
            std::ifstream f(odo);
            std::string header, row;
            std::getline(f, header);
            std::getline(f, row);
            OdometrySummary s;
            char comma;
            std::istringstream is(row);
            is >> s.mean >> comma >> s.stddev;
            if (!is.fail()) r.odometry = s;
        }
        runs.push_back(r);
    }
    Report rep = compare_report(runs);
    std::cout << rep.text;
    const std::string out_dir = cfg.get_string("out", "");
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream t(fs::path(out_dir) / "report.txt");
        t << rep.text;
        std::ofstream c(fs::path(out_dir) / "report.csv");
        c << rep.csv;
        check(t.good() && c.good(), "report: cannot write outputs");
    }
}

}  // namespace
}  // namespace parallax

int main(int argc, char** argv) {
    using namespace parallax;
    CLI::App app{"desk-scale unsupervised monocular depth and ego-motion"};
    app.require_subcommand(1);

    struct SubFlags {
        FlagSet flags;
        std::string seed, steps, dataset, checkpoint, out, mode, refine_steps, median_scale, cap;
    };
    std::map<std::string, SubFlags> sub_flags;
    std::vector<std::string> report_csvs;

    auto add_common = [&](CLI::App* sub) {
        SubFlags& f = sub_flags[sub->get_name()];
        sub->add_option("--config", f.flags.config_path, "key=value config file");
        sub->add_option("--seed", f.seed, "rng seed");
        sub->add_option("--steps", f.steps, "training steps");
        sub->add_option("--dataset", f.dataset, "dataset directory");
        sub->add_option("--checkpoint", f.checkpoint, "checkpoint file");
        sub->add_option("--out", f.out, "output directory");
        sub->add_option("--mode", f.mode, "baseline|motion");
        sub->add_option("--refine-steps", f.refine_steps, "online refinement steps (default 20)");
        sub->add_option("--median-scale", f.median_scale, "on|off (default on)");
        sub->add_option("--cap", f.cap, "depth evaluation cap (default 80)");
        return sub;
    };

    add_common(app.add_subcommand("generate", "synthesize a dataset"));
    add_common(app.add_subcommand("train", "train a model"));
    add_common(app.add_subcommand("refine", "online refinement over a sequence"));
    add_common(app.add_subcommand("eval", "evaluate a checkpoint"));
    CLI::App* report = add_common(app.add_subcommand("report", "compare metric runs"));
    report->add_option("runs", report_csvs, "metrics.csv files to compare");

    CLI11_PARSE(app, argc, argv);

    try {
        CLI::App* sub = app.get_subcommands().front();
        SubFlags& f = sub_flags[sub->get_name()];
        if (!f.seed.empty()) f.flags.add("seed", f.seed);
        if (!f.steps.empty()) f.flags.add("steps", f.steps);
        if (!f.dataset.empty()) f.flags.add("dataset", f.dataset);
        if (!f.checkpoint.empty()) f.flags.add("checkpoint", f.checkpoint);
        if (!f.out.empty()) f.flags.add("out", f.out);
        if (!f.mode.empty()) f.flags.add("mode", f.mode);
        if (!f.refine_steps.empty()) f.flags.add("refine_steps", f.refine_steps);
        if (!f.median_scale.empty()) f.flags.add("median_scale", f.median_scale);
        if (!f.cap.empty()) f.flags.add("cap", f.cap);
        const KeyValueConfig cfg = f.flags.resolve();

        const std::string name = sub->get_name();
        if (name == "generate")
            cmd_generate(cfg);
        else if (name == "train")
            cmd_train(cfg);
        else if (name == "eval")
            cmd_eval(cfg);
        else if (name == "refine")
            cmd_refine(cfg);
        else if (name == "report")
            cmd_report(cfg, report_csvs);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
