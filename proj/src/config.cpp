#include "covidscreen/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace covidscreen {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "': '" + value + "' is not a number");
    }
}

int parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "': '" + value +
                                    "' is not an integer");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        // stoull silently wraps "-1"; demand a digit first so negatives are rejected.
        if (value.empty() || !std::isdigit(static_cast<unsigned char>(value.front())))
            throw std::invalid_argument(value);
        std::size_t used = 0;
        const unsigned long long v = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "': '" + value +
                                    "' is not a non-negative integer");
    }
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& key, const std::string& value, Parse parse) {
    std::vector<T> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        out.push_back(parse(key, item));
    }
    if (out.empty()) throw std::invalid_argument("config key '" + key + "': empty list");
    return out;
}

}  // namespace

void ExperimentConfig::set(const std::string& key, const std::string& value) {
    if (key == "dataset_root") dataset_root = value;
    else if (key == "backbone") backbone = value;
    else if (key == "output_dir") output_dir = value;
    else if (key == "split_ratio") split_ratio = parse_double(key, value);
    else if (key == "head_width1") head_widths.first = parse_int(key, value);
    else if (key == "head_width2") head_widths.second = parse_int(key, value);
    else if (key == "seed") seed = parse_u64(key, value);
    else if (key == "learning_rate") training.learning_rate = parse_double(key, value);
    else if (key == "epochs") training.epochs = parse_int(key, value);
    else if (key == "batch_size") training.batch_size = parse_int(key, value);
    else if (key == "optimizer") training.optimizer = value;
    else if (key == "grid_learning_rates")
        grids.learning_rates = parse_list<double>(key, value, parse_double);
    else if (key == "grid_epochs") grids.epochs = parse_list<int>(key, value, parse_int);
    else if (key == "grid_batch_sizes") grids.batch_sizes = parse_list<int>(key, value, parse_int);
    else if (key == "qs_kernel_size") quickshift.kernel_size = parse_double(key, value);
    else if (key == "qs_max_dist") quickshift.max_dist = parse_double(key, value);
    else if (key == "qs_ratio") quickshift.ratio = parse_double(key, value);
    else if (key == "lime_perturbations") lime.n_perturbations = parse_int(key, value);
    else if (key == "lime_kernel_width") lime.kernel_width = parse_double(key, value);
    else if (key == "lime_top_k") lime.top_k = parse_int(key, value);
    else if (key == "lime_fill") {
        if (value == "mean") lime.fill = FillPolicy::mean_color;
        else if (value == "zero") lime.fill = FillPolicy::zero;
        else
            throw std::invalid_argument("config key 'lime_fill': '" + value +
                                        "' (expected mean or zero)");
    } else {
        throw std::invalid_argument("unknown config key '" + key + "'");
    }
}

void ExperimentConfig::propagate_seed() {
    training.seed = seed;
    lime.seed = seed;
}

void apply_assignment(ExperimentConfig& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw std::invalid_argument("expected key=value, got '" + assignment + "'");
    }
    const std::string key = trim(assignment.substr(0, eq));
    const std::string value = trim(assignment.substr(eq + 1));
    if (key.empty()) throw std::invalid_argument("empty config key in '" + assignment + "'");
    config.set(key, value);
}

void parse_config_file_into(ExperimentConfig& config, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config file " + path.string());
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        try {
            apply_assignment(config, line);
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": " +
                                        e.what());
        }
    }
}

ExperimentConfig parse_config_file(const std::filesystem::path& path) {
    ExperimentConfig config;
    parse_config_file_into(config, path);
    config.propagate_seed();
    return config;
}

}  // namespace covidscreen
