#include "covidscreen/training.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <random>
#include <stdexcept>
#include <tuple>

#include <nlohmann/json.hpp>

namespace covidscreen {

using nlohmann::json;

void TrainingConfig::validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (optimizer != "adam") {
        throw std::invalid_argument("unsupported optimizer '" + optimizer + "' (only adam)");
    }
}

json TrainingConfig::to_json() const {
    return json{{"learning_rate", learning_rate},
                {"epochs", epochs},
                {"batch_size", batch_size},
                {"optimizer", optimizer},
                {"seed", seed}};
}

TrainingConfig TrainingConfig::from_json(const json& j) {
    TrainingConfig c;
    c.learning_rate = j.at("learning_rate").get<double>();
    c.epochs = j.at("epochs").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.optimizer = j.value("optimizer", "adam");
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

double cross_entropy(const std::array<double, 2>& probs, int label) {
    const double p = std::max(probs[label], 1e-12);
    return -std::log(p);
}

namespace {

struct CachedSplit {
    std::vector<std::vector<double>> features;
    std::vector<int> labels;
};

CachedSplit cache_features(const ClassifierModel& model, std::span<const ImageSample> samples) {
    CachedSplit split;
    split.features.resize(samples.size());
    split.labels.resize(samples.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(samples.size()); ++i) {
        split.features[i] = model.features(preprocess(samples[i], model.spec()));
        split.labels[i] = samples[i].label;
    }
    return split;
}

struct SplitStats {
    double accuracy = 0.0;
    double loss = 0.0;
};

SplitStats evaluate_cached(const DenseHead& head, const CachedSplit& split) {
    SplitStats stats;
    std::int64_t correct = 0;
    for (std::size_t i = 0; i < split.features.size(); ++i) {
        const auto probs = head.forward(split.features[i]);
        const int pred = probs[1] > probs[0] ? 1 : 0;
        if (pred == split.labels[i]) ++correct;
        stats.loss += cross_entropy(probs, split.labels[i]);
    }
    stats.accuracy = static_cast<double>(correct) / static_cast<double>(split.features.size());
    stats.loss /= static_cast<double>(split.features.size());
    return stats;
}

// One Adam step over every head parameter; m/v are head-shaped accumulators.
void adam_step(DenseHead& head, const DenseHead& grads, DenseHead& m, DenseHead& v, int t,
               double lr) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-7;
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);
    auto heads = head.dense();
    auto gs = grads.dense();
    auto ms = m.dense();
    auto vs = v.dense();
    for (int layer = 0; layer < 3; ++layer) {
        auto update = [&](std::vector<double>& p, const std::vector<double>& g,
                          std::vector<double>& mm, std::vector<double>& vv) {
            for (std::size_t i = 0; i < p.size(); ++i) {
                mm[i] = beta1 * mm[i] + (1.0 - beta1) * g[i];
                vv[i] = beta2 * vv[i] + (1.0 - beta2) * g[i] * g[i];
                const double mhat = mm[i] / bc1;
                const double vhat = vv[i] / bc2;
                p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        };
        update(heads[layer]->w, gs[layer]->w, ms[layer]->w, vs[layer]->w);
        update(heads[layer]->b, gs[layer]->b, ms[layer]->b, vs[layer]->b);
    }
}

}  // namespace

EpochTrace train(ClassifierModel& model, std::span<const ImageSample> train_set,
                 std::span<const ImageSample> val_set, const TrainingConfig& config) {
    config.validate();
    if (train_set.empty()) throw std::invalid_argument("train split is empty");
    if (val_set.empty()) throw std::invalid_argument("validation split is empty");

    const CachedSplit train_cache = cache_features(model, train_set);
    const CachedSplit val_cache = cache_features(model, val_set);

    DenseHead& head = model.head();
    DenseHead m = head.zeros_like();
    DenseHead v = head.zeros_like();

    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    EpochTrace trace;
    int t = 0;  // Adam timestep
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            const double inv_batch = 1.0 / static_cast<double>(stop - start);

            DenseHead grads = head.zeros_like();
            double batch_loss = 0.0;
            for (std::size_t k = start; k < stop; ++k) {
                const std::size_t i = order[k];
                HeadCache cache;
                const auto probs = head.forward(train_cache.features[i], &cache);
                batch_loss += cross_entropy(probs, train_cache.labels[i]);
                std::array<double, 2> dlogits{probs[0], probs[1]};
                dlogits[train_cache.labels[i]] -= 1.0;
                dlogits[0] *= inv_batch;
                dlogits[1] *= inv_batch;
                head.backward(cache, dlogits, grads);
            }
            if (!std::isfinite(batch_loss)) {
                throw std::runtime_error("training loss is non-finite at epoch " +
                                         std::to_string(epoch));
            }
            adam_step(head, grads, m, v, ++t, config.learning_rate);
        }

        const SplitStats tr = evaluate_cached(head, train_cache);
        const SplitStats va = evaluate_cached(head, val_cache);
        if (!std::isfinite(tr.loss) || !std::isfinite(va.loss)) {
            throw std::runtime_error("training loss is non-finite at epoch " +
                                     std::to_string(epoch));
        }
        trace.train_accuracy.push_back(tr.accuracy);
        trace.train_loss.push_back(tr.loss);
        trace.val_accuracy.push_back(va.accuracy);
        trace.val_loss.push_back(va.loss);
    }
    return trace;
}

std::vector<int> predict_labels(const ClassifierModel& model,
                                std::span<const ImageSample> samples) {
    std::vector<Tensor> batch;
    batch.reserve(samples.size());
    for (const auto& s : samples) batch.push_back(preprocess(s, model.spec()));
    const auto probs = model.predict_proba(batch);
    std::vector<int> labels(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) labels[i] = probs[i][1] > probs[i][0] ? 1 : 0;
    return labels;
}

MetricReport evaluate_model(const ClassifierModel& model, std::span<const ImageSample> samples,
                            Averaging mode) {
    if (samples.empty()) throw std::invalid_argument("cannot evaluate an empty split");
    const std::vector<int> preds = predict_labels(model, samples);
    std::vector<int> truths(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) truths[i] = samples[i].label;
    // Class 0 (first class name in lexicographic order) is the positive class.
    return compute_metrics(confusion(preds, truths, 0), mode);
}

GridResult grid_search(const GridSpec& grids,
                       const std::function<double(const TrainingConfig&)>& trainer) {
    if (grids.learning_rates.empty() || grids.epochs.empty() || grids.batch_sizes.empty()) {
        throw std::invalid_argument("grid lists must be non-empty");
    }
    GridResult result;
    bool have_best = false;
    double best_score = 0.0;
    for (double lr : grids.learning_rates) {
        for (int ep : grids.epochs) {
            for (int bs : grids.batch_sizes) {
                TrainingConfig config;
                config.learning_rate = lr;
                config.epochs = ep;
                config.batch_size = bs;
                config.validate();
                const double score = trainer(config);
                result.table.push_back({config, score});

                const auto key = std::make_tuple(lr, ep, bs);
                const auto best_key = std::make_tuple(result.best.learning_rate,
                                                      result.best.epochs, result.best.batch_size);
                if (!have_best || score > best_score ||
                    (score == best_score && key < best_key)) {
                    result.best = config;
                    best_score = score;
                    have_best = true;
                }
            }
        }
    }
    return result;
}

void write_grid_csv(const std::filesystem::path& path, const GridResult& result) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << "lr,epochs,batch,val_accuracy\n";
    for (const auto& cell : result.table) {
        char line[96];
        std::snprintf(line, sizeof line, "%g,%d,%d,%.6f\n", cell.config.learning_rate,
                      cell.config.epochs, cell.config.batch_size, cell.val_accuracy);
        out << line;
    }
}

RepeatedResult repeated_run(int n, const std::function<RunRecord(std::uint64_t)>& runner,
                            std::span<const std::uint64_t> seeds) {
    if (n < 1) throw std::invalid_argument("repeated_run needs n >= 1");
    if (static_cast<int>(seeds.size()) != n) {
        throw std::invalid_argument("repeated_run needs exactly n seeds");
    }
    RepeatedResult result;
    result.records.reserve(seeds.size());
    for (std::uint64_t seed : seeds) result.records.push_back(runner(seed));

    MetricReport& avg = result.averaged;
    avg.mode = result.records.front().test_metrics.mode;
    for (const RunRecord& r : result.records) {
        const MetricReport& m = r.test_metrics;
        avg.accuracy += m.accuracy;
        avg.precision += m.precision;
        avg.recall += m.recall;
        avg.f1 += m.f1;
        avg.confusion.tp += m.confusion.tp;
        avg.confusion.fp += m.confusion.fp;
        avg.confusion.tn += m.confusion.tn;
        avg.confusion.fn += m.confusion.fn;
        avg.zero_denominator = avg.zero_denominator || m.zero_denominator;
    }
    const double inv = 1.0 / static_cast<double>(n);
    avg.accuracy *= inv;
    avg.precision *= inv;
    avg.recall *= inv;
    avg.f1 *= inv;
    return result;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

std::string format_utc(const char* fmt) {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, fmt, &tm);
    return buf;
}

json trace_to_json(const EpochTrace& t) {
    return json{{"train_accuracy", t.train_accuracy},
                {"train_loss", t.train_loss},
                {"val_accuracy", t.val_accuracy},
                {"val_loss", t.val_loss}};
}

EpochTrace trace_from_json(const json& j) {
    EpochTrace t;
    t.train_accuracy = j.at("train_accuracy").get<std::vector<double>>();
    t.train_loss = j.at("train_loss").get<std::vector<double>>();
    t.val_accuracy = j.at("val_accuracy").get<std::vector<double>>();
    t.val_loss = j.at("val_loss").get<std::vector<double>>();
    if (t.train_loss.size() != t.train_accuracy.size() ||
        t.val_accuracy.size() != t.train_accuracy.size() ||
        t.val_loss.size() != t.train_accuracy.size()) {
        throw std::runtime_error("epoch trace arrays have mismatched lengths");
    }
    return t;
}

}  // namespace

std::string timestamp_utc_compact() { return format_utc("%Y%m%dT%H%M%S"); }
std::string timestamp_utc_iso() { return format_utc("%Y-%m-%dT%H:%M:%SZ"); }

std::string make_run_id(const std::string& backbone, std::uint64_t seed) {
    static std::atomic<int> sequence{0};
    return backbone + "_" + timestamp_utc_compact() + "_s" + std::to_string(seed) + "_" +
           std::to_string(sequence++);
}

json RunRecord::to_json() const {
    return json{{"run_id", run_id},
                {"dataset_id", dataset_id},
                {"backbone", backbone},
                {"config", config.to_json()},
                {"trace", trace_to_json(trace)},
                {"train_metrics", metric_report_to_json(train_metrics)},
                {"test_metrics", metric_report_to_json(test_metrics)},
                {"started", started},
                {"finished", finished}};
}

RunRecord RunRecord::from_json(const json& j) {
    RunRecord r;
    r.run_id = j.at("run_id").get<std::string>();
    r.dataset_id = j.at("dataset_id").get<std::string>();
    r.backbone = j.at("backbone").get<std::string>();
    r.config = TrainingConfig::from_json(j.at("config"));
    r.trace = trace_from_json(j.at("trace"));
    r.train_metrics = metric_report_from_json(j.at("train_metrics"));
    r.test_metrics = metric_report_from_json(j.at("test_metrics"));
    r.started = j.at("started").get<std::string>();
    r.finished = j.at("finished").get<std::string>();

    const MetricReport recomputed = compute_metrics(r.test_metrics.confusion, r.test_metrics.mode);
    if (std::abs(recomputed.accuracy - r.test_metrics.accuracy) > 1e-9) {
        throw std::runtime_error("run record " + r.run_id +
                                 ": stored test accuracy disagrees with its confusion matrix");
    }
    return r;
}

std::filesystem::path save_run_record(const RunRecord& record,
                                      const std::filesystem::path& runs_dir) {
    std::filesystem::create_directories(runs_dir);
    const auto path = runs_dir / (record.run_id + ".json");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write run record " + path.string());
    out << record.to_json().dump(2) << '\n';
    return path;
}

RunRecord load_run_record(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read run record " + path.string());
    return RunRecord::from_json(json::parse(in));
}

LoadedRuns load_runs(const std::filesystem::path& runs_dir) {
    if (!std::filesystem::is_directory(runs_dir)) {
        throw std::runtime_error("runs directory not found: " + runs_dir.string());
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(runs_dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".json") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());

    LoadedRuns out;
    for (const auto& file : files) {
        try {
            out.records.push_back(load_run_record(file));
        } catch (const std::exception& e) {
            out.warnings.push_back(file.string() + ": " + e.what());
        }
    }
    return out;
}

}  // namespace covidscreen
