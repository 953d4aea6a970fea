#include "covidscreen/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "covidscreen/config.hpp"
#include "covidscreen/confidence.hpp"
#include "covidscreen/dataset.hpp"
#include "covidscreen/explain.hpp"
#include "covidscreen/imageio.hpp"
#include "covidscreen/metrics.hpp"
#include "covidscreen/model.hpp"
#include "covidscreen/report.hpp"
#include "covidscreen/segmentation.hpp"
#include "covidscreen/training.hpp"
#include "covidscreen/viz.hpp"

namespace covidscreen {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string data;
    std::string backbone;
    std::string output;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "experiment config file (key = value lines)");
    cmd->add_option("--set", opts.overrides, "config override, key=value (repeatable)");
    cmd->add_option("--data", opts.data, "dataset root with two class directories");
    cmd->add_option("--backbone", opts.backbone, "backbone name (see `backbones list`)");
    cmd->add_option("--output", opts.output, "output directory");
    cmd->add_option("--seed", opts.seed, "RNG seed (overrides COVIDSCREEN_SEED)");
}

// Layering: defaults < COVIDSCREEN_SEED < config file < --set < direct flags.
ExperimentConfig resolve_config(const CommonOpts& opts) {
    ExperimentConfig cfg;
    if (const char* env = std::getenv("COVIDSCREEN_SEED")) cfg.set("seed", env);
    if (!opts.config_path.empty()) parse_config_file_into(cfg, opts.config_path);
    for (const auto& kv : opts.overrides) apply_assignment(cfg, kv);
    if (!opts.data.empty()) cfg.dataset_root = opts.data;
    if (!opts.backbone.empty()) cfg.backbone = opts.backbone;
    if (!opts.output.empty()) cfg.output_dir = opts.output;
    if (opts.seed) cfg.seed = *opts.seed;
    cfg.propagate_seed();
    return cfg;
}

struct SplitData {
    LoadedDataset loaded;
    std::vector<ImageSample> train;
    std::vector<ImageSample> test;
    DatasetManifest manifest;
    std::string dataset_id;
};

SplitData load_and_split(const ExperimentConfig& cfg) {
    if (cfg.dataset_root.empty()) {
        throw std::runtime_error("no dataset root given; pass --data or set dataset_root");
    }
    const BackboneSpec& spec = find_backbone(cfg.backbone);
    SplitData data;
    data.loaded = load_directory(cfg.dataset_root, {spec.input_h, spec.input_w});
    for (const auto& err : data.loaded.file_errors) {
        std::cerr << "warning: skipped " << err.path << ": " << err.reason << '\n';
    }
    auto [train, test] = stratified_split(data.loaded.samples, cfg.split_ratio, cfg.seed);
    data.train = std::move(train);
    data.test = std::move(test);
    data.manifest = make_manifest(data.loaded.class_names, data.train, data.test,
                                  cfg.split_ratio, cfg.seed);
    data.dataset_id = fs::path(cfg.dataset_root).filename().string();
    if (data.dataset_id.empty()) data.dataset_id = "dataset";
    return data;
}

void print_metrics(const std::string& title, const MetricReport& m) {
    std::printf("%s: accuracy %.4f  precision %.4f  recall %.4f  f1 %.4f  (%s)\n", title.c_str(),
                m.accuracy, m.precision, m.recall, m.f1, averaging_name(m.mode).c_str());
    std::printf("  confusion: tp %lld  fp %lld  tn %lld  fn %lld\n",
                static_cast<long long>(m.confusion.tp), static_cast<long long>(m.confusion.fp),
                static_cast<long long>(m.confusion.tn), static_cast<long long>(m.confusion.fn));
}

int cmd_backbones_list() {
    std::printf("%-20s %-12s %-10s %s\n", "Name", "Input", "Features", "Weights");
    for (const auto& spec : backbone_registry()) {
        char input[32];
        std::snprintf(input, sizeof input, "%dx%dx%d", spec.input_h, spec.input_w, spec.input_c);
        std::printf("%-20s %-12s %-10d %s\n", spec.name.c_str(), input, spec.feature_dim,
                    spec.weights_source.c_str());
    }
    return 0;
}

int cmd_ingest(const ExperimentConfig& cfg) {
    const SplitData data = load_and_split(cfg);
    fs::create_directories(cfg.output_dir);
    const fs::path manifest_path = fs::path(cfg.output_dir) / "manifest.json";
    data.manifest.save(manifest_path);

    std::printf("dataset: %s\n", cfg.dataset_root.c_str());
    for (int c = 0; c < 2; ++c) {
        std::printf("class %d (%s): train %d, test %d\n", c, data.manifest.class_names[c].c_str(),
                    data.manifest.train_count[c], data.manifest.test_count[c]);
    }
    std::printf("file errors: %zu\n", data.loaded.file_errors.size());
    std::printf("manifest: %s\n", manifest_path.c_str());
    return 0;
}

RunRecord execute_run(const ExperimentConfig& cfg, const SplitData& data,
                      ClassifierModel& model) {
    RunRecord record;
    record.backbone = cfg.backbone;
    record.dataset_id = data.dataset_id;
    record.config = cfg.training;
    record.run_id = make_run_id(cfg.backbone, cfg.training.seed);
    record.started = timestamp_utc_iso();
    record.trace = train(model, data.train, data.test, cfg.training);
    record.train_metrics = evaluate_model(model, data.train);
    record.test_metrics = evaluate_model(model, data.test);
    record.finished = timestamp_utc_iso();
    return record;
}

int cmd_train(const ExperimentConfig& cfg) {
    const SplitData data = load_and_split(cfg);
    ClassifierModel model = build_classifier(cfg.backbone, cfg.head_widths, cfg.seed);
    const std::uint64_t checksum_before = model.backbone_checksum();

    RunRecord record = execute_run(cfg, data, model);
    if (model.backbone_checksum() != checksum_before) {
        throw std::runtime_error("backbone parameters changed during training");
    }

    const fs::path out_dir(cfg.output_dir);
    const fs::path record_path = save_run_record(record, out_dir / "runs");
    fs::create_directories(out_dir / "models");
    const fs::path model_path = out_dir / "models" / (record.run_id + ".json");
    model.save(model_path);
    data.manifest.save(out_dir / "manifest.json");
    const auto plots =
        plot_traces({record.trace}, {cfg.backbone}, out_dir / "plots", record.run_id);

    std::printf("run: %s\n", record.run_id.c_str());
    print_metrics("train", record.train_metrics);
    print_metrics("test", record.test_metrics);
    std::printf("record: %s\nmodel: %s\n", record_path.c_str(), model_path.c_str());
    for (const auto& p : plots) std::printf("plot: %s\n", p.c_str());
    return 0;
}

int cmd_grid_search(const ExperimentConfig& cfg) {
    const SplitData data = load_and_split(cfg);
    int cell = 0;
    const int total = static_cast<int>(cfg.grids.learning_rates.size() *
                                       cfg.grids.epochs.size() * cfg.grids.batch_sizes.size());
    const auto trainer = [&](const TrainingConfig& tc) {
        TrainingConfig run_cfg = tc;
        run_cfg.seed = cfg.seed;
        ClassifierModel model = build_classifier(cfg.backbone, cfg.head_widths, cfg.seed);
        const EpochTrace trace = train(model, data.train, data.test, run_cfg);
        const double val_acc = trace.val_accuracy.back();
        std::fprintf(stderr, "[%d/%d] lr %g epochs %d batch %d -> val accuracy %.4f\n", ++cell,
                     total, tc.learning_rate, tc.epochs, tc.batch_size, val_acc);
        return val_acc;
    };

    const GridResult result = grid_search(cfg.grids, trainer);
    fs::create_directories(cfg.output_dir);
    const fs::path csv = fs::path(cfg.output_dir) / "grid_search.csv";
    write_grid_csv(csv, result);

    std::printf("evaluated %zu configurations\n", result.table.size());
    std::printf("best: lr %g, epochs %d, batch %d\n", result.best.learning_rate,
                result.best.epochs, result.best.batch_size);
    std::printf("table: %s\n", csv.c_str());
    return 0;
}

int cmd_evaluate(const ExperimentConfig& cfg, const std::string& model_path,
                 const std::string& split) {
    ClassifierModel model = ClassifierModel::load(model_path);
    ExperimentConfig eval_cfg = cfg;
    eval_cfg.backbone = model.spec().name;
    const SplitData data = load_and_split(eval_cfg);

    const std::vector<ImageSample>* samples = nullptr;
    if (split == "train") samples = &data.train;
    else if (split == "test") samples = &data.test;
    else samples = &data.loaded.samples;

    const MetricReport report = evaluate_model(model, *samples);
    print_metrics(split, report);

    fs::create_directories(cfg.output_dir);
    const fs::path csv = fs::path(cfg.output_dir) / ("evaluation_" + split + ".csv");
    write_metrics_csv(csv, {{model.spec().name + "@" + split, report}});
    std::printf("table: %s\n", csv.c_str());
    return 0;
}

json params_json(const ExperimentConfig& cfg) {
    return json{{"quickshift",
                 {{"kernel_size", cfg.quickshift.kernel_size},
                  {"max_dist", cfg.quickshift.max_dist},
                  {"ratio", cfg.quickshift.ratio}}},
                {"lime",
                 {{"n_perturbations", cfg.lime.n_perturbations},
                  {"kernel_width", cfg.lime.kernel_width},
                  {"top_k", cfg.lime.top_k},
                  {"fill", cfg.lime.fill == FillPolicy::mean_color ? "mean" : "zero"}}}};
}

int cmd_explain(const ExperimentConfig& cfg, const std::string& model_path,
                const std::string& image_path) {
    const ClassifierModel model = ClassifierModel::load(model_path);
    const Tensor image = read_image(image_path);

    const Explanation explanation = explain(model, image, cfg.quickshift, cfg.lime);
    if (explanation.degenerate) {
        std::cerr << "warning: segmentation produced a single segment; "
                     "the explanation is trivial\n";
    }

    fs::create_directories(cfg.output_dir);
    const std::string stem = fs::path(image_path).stem().string();
    const fs::path overlay_path = fs::path(cfg.output_dir) / (stem + "_lime_overlay.png");
    const fs::path json_path = fs::path(cfg.output_dir) / (stem + "_explanation.json");

    render_overlay(image, explanation.overlay_mask, "jet", overlay_path);
    json j = explanation.to_json();
    j["params"] = params_json(cfg);
    std::ofstream out(json_path);
    if (!out) throw std::runtime_error("cannot write " + json_path.string());
    out << j.dump(2) << '\n';

    std::printf("explained class: %d\n", explanation.explained_class);
    std::printf("segments: %d\n", explanation.n_segments);
    std::printf("top features:");
    for (int id : explanation.top_features) std::printf(" %d", id);
    std::printf("\noverlay: %s\nreport: %s\n", overlay_path.c_str(), json_path.c_str());
    return 0;
}

int cmd_heatmap(const ExperimentConfig& cfg, const std::string& model_path,
                const std::string& image_path, std::vector<std::string> layers,
                std::optional<int> class_index, const std::string& mode) {
    const ClassifierModel model = ClassifierModel::load(model_path);
    const Tensor image = read_image(image_path);
    ImageSample sample;
    sample.pixels = image;
    const Tensor pre = preprocess(sample, model.spec());

    fs::create_directories(cfg.output_dir);
    const std::string stem = fs::path(model_path).stem().string();

    if (mode == "activation") {
        const HeatmapStack stack = activation_maps(model, pre, layers);
        for (const auto& h : stack) {
            if (h.all_zero) {
                std::cerr << "note: layer " << h.layer << " produced an all-zero map\n";
            }
            const fs::path out =
                fs::path(cfg.output_dir) / (stem + "_heatmap_" + h.layer + ".png");
            render_overlay(image, h.map, "jet", out);
            std::printf("heatmap: %s\n", out.c_str());
        }
        return 0;
    }

    // Gradient-weighted view. Default layer: the last convolutional layer;
    // default class: the model's argmax on this image.
    if (layers.empty()) {
        const auto& net_layers = model.backbone().layers();
        for (auto it = net_layers.rbegin(); it != net_layers.rend(); ++it) {
            if ((*it)->kind() == LayerKind::conv) {
                layers.push_back((*it)->name());
                break;
            }
        }
        if (layers.empty()) throw std::runtime_error("backbone has no convolutional layer");
    }
    int cls = class_index.value_or(-1);
    if (cls < 0) {
        const auto probs = model.predict_one(pre);
        cls = probs[1] > probs[0] ? 1 : 0;
    }
    for (const auto& layer : layers) {
        const Heatmap h = gradient_weighted_map(model, pre, cls, layer);
        if (h.all_zero) {
            std::cerr << "note: layer " << layer << " produced an all-zero map\n";
        }
        const fs::path out = fs::path(cfg.output_dir) / (stem + "_gradcam_" + layer + ".png");
        render_overlay(image, h.map, "jet", out);
        std::printf("heatmap: %s\n", out.c_str());
    }
    return 0;
}

int cmd_report(const std::string& kind, const ExperimentConfig& cfg, const std::string& runs_dir,
               double alpha) {
    const fs::path runs = runs_dir.empty() ? fs::path(cfg.output_dir) / "runs"
                                           : fs::path(runs_dir);
    const LoadedRuns loaded = load_runs(runs);
    for (const auto& w : loaded.warnings) std::cerr << "warning: skipped " << w << '\n';
    if (loaded.records.empty()) {
        throw std::runtime_error("no usable run records in " + runs.string());
    }

    const std::vector<ModelSummary> summaries = summarize_runs(loaded.records);
    fs::create_directories(cfg.output_dir);
    const fs::path out_dir(cfg.output_dir);

    if (kind == "metrics") {
        const ReportBundle bundle = generate_report(loaded.records, out_dir, alpha);
        std::printf("train metrics: %s\n", bundle.train_metrics_csv.c_str());
        std::printf("test metrics: %s\n", bundle.test_metrics_csv.c_str());
        std::printf("misclassification: %s\n", bundle.misclassification_csv.c_str());
        std::printf("confidence intervals: %s\n", bundle.ci_csv.c_str());
        std::printf("averages: %s\n", bundle.average_csv.c_str());
        std::printf("best model: %s\n", bundle.best_model_json.c_str());
    } else if (kind == "ci") {
        const fs::path csv = out_dir / "confidence_intervals.csv";
        write_interval_csv(csv, interval_table(interval_records(summaries), alpha));
        std::printf("confidence intervals: %s\n", csv.c_str());
    } else {  // average
        const fs::path csv = out_dir / "average_accuracy.csv";
        write_average_csv(csv, summaries);
        std::printf("averages: %s\n", csv.c_str());
    }
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"covidscreen: frozen-backbone image screening with LIME explanations"};
    app.require_subcommand(1);

    auto* backbones = app.add_subcommand("backbones", "registry inspection");
    backbones->require_subcommand(1);
    backbones->add_subcommand("list", "list registered backbones");

    CommonOpts ingest_opts;
    auto* ingest = app.add_subcommand("ingest", "load a dataset and write its split manifest");
    add_common(ingest, ingest_opts);

    CommonOpts train_opts;
    auto* train_cmd = app.add_subcommand("train", "train a classification head");
    add_common(train_cmd, train_opts);

    CommonOpts grid_opts;
    auto* grid = app.add_subcommand("grid-search", "train every grid combination");
    add_common(grid, grid_opts);

    CommonOpts eval_opts;
    std::string eval_model, eval_split = "test";
    auto* evaluate = app.add_subcommand("evaluate", "evaluate a saved model on a dataset split");
    add_common(evaluate, eval_opts);
    evaluate->add_option("--model", eval_model, "saved model JSON")->required();
    evaluate->add_option("--split", eval_split, "which split to evaluate")
        ->check(CLI::IsMember({"train", "test", "all"}));

    CommonOpts explain_opts;
    std::string explain_model, explain_image;
    auto* explain_cmd = app.add_subcommand("explain", "LIME explanation for one image");
    add_common(explain_cmd, explain_opts);
    explain_cmd->add_option("--model", explain_model, "saved model JSON")->required();
    explain_cmd->add_option("--image", explain_image, "image to explain")->required();

    CommonOpts heatmap_opts;
    std::string heatmap_model, heatmap_image, heatmap_mode = "gradcam";
    std::vector<std::string> heatmap_layers;
    std::optional<int> heatmap_class;
    auto* heatmap = app.add_subcommand("heatmap", "class-activation heat maps");
    add_common(heatmap, heatmap_opts);
    heatmap->add_option("--model", heatmap_model, "saved model JSON")->required();
    heatmap->add_option("--image", heatmap_image, "input image")->required();
    heatmap->add_option("--layer", heatmap_layers, "backbone layer (repeatable)");
    heatmap->add_option("--class", heatmap_class, "class index (default: argmax)");
    heatmap->add_option("--mode", heatmap_mode, "heatmap kind")
        ->check(CLI::IsMember({"activation", "gradcam"}));

    CommonOpts report_opts;
    std::string report_runs;
    double report_alpha = 0.05;
    auto* report = app.add_subcommand("report", "tables from persisted run records");
    report->require_subcommand(1);
    auto* report_metrics = report->add_subcommand("metrics", "full metric/report bundle");
    auto* report_ci = report->add_subcommand("ci", "confidence-interval table");
    auto* report_average = report->add_subcommand("average", "train/test average accuracies");
    for (auto* sub : {report_metrics, report_ci, report_average}) {
        add_common(sub, report_opts);
        sub->add_option("--runs", report_runs, "run-record directory (default <output>/runs)");
        sub->add_option("--alpha", report_alpha, "significance level");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        return 2;
    }

    try {
        if (backbones->parsed()) return cmd_backbones_list();
        if (ingest->parsed()) return cmd_ingest(resolve_config(ingest_opts));
        if (train_cmd->parsed()) return cmd_train(resolve_config(train_opts));
        if (grid->parsed()) return cmd_grid_search(resolve_config(grid_opts));
        if (evaluate->parsed()) {
            return cmd_evaluate(resolve_config(eval_opts), eval_model, eval_split);
        }
        if (explain_cmd->parsed()) {
            return cmd_explain(resolve_config(explain_opts), explain_model, explain_image);
        }
        if (heatmap->parsed()) {
            return cmd_heatmap(resolve_config(heatmap_opts), heatmap_model, heatmap_image,
                               heatmap_layers, heatmap_class, heatmap_mode);
        }
        if (report->parsed()) {
            const std::string kind = report_metrics->parsed()  ? "metrics"
                                     : report_ci->parsed()     ? "ci"
                                                               : "average";
            return cmd_report(kind, resolve_config(report_opts), report_runs, report_alpha);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;  // unreachable with require_subcommand(1)
}

}  // namespace covidscreen
