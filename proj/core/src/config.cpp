#include "istrain/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace istrain {

namespace {

struct KeyValue {
    std::string key;
    std::string value;
    int line;
    int value_column;
};

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_double(const KeyValue& kv) {
    try {
        std::size_t pos = 0;
        double v = std::stod(kv.value, &pos);
        if (pos != kv.value.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("invalid number for key '" + kv.key + "': '" + kv.value + "'", kv.line,
                          kv.value_column);
    }
}

std::uint64_t parse_count(const KeyValue& kv) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(kv.value.data(), kv.value.data() + kv.value.size(), v);
    if (ec != std::errc() || ptr != kv.value.data() + kv.value.size())
        throw ConfigError("invalid count for key '" + kv.key + "': '" + kv.value + "'", kv.line,
                          kv.value_column);
    return v;
}

bool parse_bool(const KeyValue& kv) {
    if (kv.value == "true") return true;
    if (kv.value == "false") return false;
    throw ConfigError("invalid boolean for key '" + kv.key + "': '" + kv.value + "'", kv.line,
                      kv.value_column);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, sep)) parts.push_back(trim(part));
    return parts;
}

Smoothing parse_smoothing(const std::string& value, const KeyValue& kv) {
    Smoothing s;
    if (value == "adaptive") {
        s.mode = Smoothing::Mode::Adaptive;
        return s;
    }
    if (value.rfind("constant:", 0) == 0) {
        s.mode = Smoothing::Mode::Constant;
        KeyValue num = kv;
        num.value = value.substr(9);
        s.constant = parse_double(num);
        if (s.constant < 0.0)
            throw ConfigError("smoothing constant must be >= 0", kv.line, kv.value_column);
        return s;
    }
    throw ConfigError("invalid smoothing '" + value + "' (expected adaptive or constant:<c>)",
                      kv.line, kv.value_column);
}

// cell = <strategy> k=<k> smoothing=<adaptive|constant:c>
ExperimentCell parse_cell(const KeyValue& kv) {
    ExperimentCell cell;
    std::stringstream ss(kv.value);
    std::string token;
    bool have_strategy = false;
    while (ss >> token) {
        if (auto eq = token.find('='); eq != std::string::npos) {
            std::string name = token.substr(0, eq);
            std::string value = token.substr(eq + 1);
            if (name == "k") {
                KeyValue num = kv;
                num.value = value;
                cell.k = parse_double(num);
                if (!(cell.k <= 1.0))
                    throw ConfigError("cell k = " + value + " violates k <= 1", kv.line,
                                      kv.value_column);
            } else if (name == "smoothing") {
                cell.smoothing = parse_smoothing(value, kv);
            } else {
                throw ConfigError("unknown cell option '" + name + "'", kv.line, kv.value_column);
            }
        } else {
            auto s = strategy_from_name(token);
            if (!s)
                throw ConfigError("unknown strategy '" + token + "'", kv.line, kv.value_column);
            cell.strategy = *s;
            have_strategy = true;
        }
    }
    if (!have_strategy)
        throw ConfigError("cell is missing a strategy", kv.line, kv.value_column);
    return cell;
}

}  // namespace

ExperimentSpec parse_config_text(const std::string& text) {
    ExperimentSpec spec;
    spec.cells.clear();
    spec.seeds.clear();
    bool approx_lr_set = false;
    bool lr_set = false;

    std::stringstream stream(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(stream, raw)) {
        ++line_no;
        std::string line = raw;
        if (auto hash = line.find('#'); hash != std::string::npos) line = line.substr(0, hash);
        if (trim(line).empty()) continue;

        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected 'key = value'", line_no, 1);
        KeyValue kv;
        kv.key = trim(line.substr(0, eq));
        kv.value = trim(line.substr(eq + 1));
        kv.line = line_no;
        kv.value_column = static_cast<int>(line.find_first_not_of(" \t", eq + 1)) + 1;
        if (kv.key.empty()) throw ConfigError("empty key", line_no, 1);
        if (kv.value.empty())
            throw ConfigError("empty value for key '" + kv.key + "'", line_no, kv.value_column);

        const std::string& k = kv.key;
        if (k == "dataset.source") {
            if (kv.value == "synthetic") {
                spec.source = ExperimentSpec::Source::Synthetic;
            } else if (kv.value == "idx") {
                spec.source = ExperimentSpec::Source::Idx;
            } else {
                throw ConfigError("dataset.source must be synthetic or idx", kv.line,
                                  kv.value_column);
            }
        } else if (k == "dataset.images") {
            spec.images_path = kv.value;
        } else if (k == "dataset.labels") {
            spec.labels_path = kv.value;
        } else if (k == "dataset.n") {
            spec.synth.n = parse_count(kv);
        } else if (k == "dataset.dims") {
            spec.synth.dims = parse_count(kv);
        } else if (k == "dataset.classes") {
            spec.synth.classes = parse_count(kv);
        } else if (k == "dataset.noise") {
            spec.synth.noise = parse_double(kv);
        } else if (k == "dataset.radius") {
            spec.synth.radius = parse_double(kv);
        } else if (k == "dataset.hard_fraction") {
            spec.synth.hard_fraction = parse_double(kv);
        } else if (k == "dataset.seed") {
            spec.synth_seed = parse_count(kv);
        } else if (k == "cell") {
            spec.cells.push_back(parse_cell(kv));
        } else if (k == "seeds") {
            for (const std::string& s : split(kv.value, ',')) {
                KeyValue num = kv;
                num.value = s;
                spec.seeds.push_back(parse_count(num));
            }
        } else if (k == "train.iterations") {
            spec.train.iterations = parse_count(kv);
        } else if (k == "train.batch_size") {
            spec.train.batch_size = parse_count(kv);
            if (spec.train.batch_size < 1)
                throw ConfigError("train.batch_size must be >= 1", kv.line, kv.value_column);
        } else if (k == "train.pool_factor") {
            spec.train.pool_factor = parse_double(kv);
            if (spec.train.pool_factor < 1.0)
                throw ConfigError("train.pool_factor must be >= 1 so the pool covers the batch",
                                  kv.line, kv.value_column);
        } else if (k == "train.ema_decay") {
            spec.train.ema_decay = parse_double(kv);
            if (!(spec.train.ema_decay > 0.0 && spec.train.ema_decay < 1.0))
                throw ConfigError("train.ema_decay must be in (0, 1)", kv.line, kv.value_column);
        } else if (k == "train.learning_rate") {
            spec.train.learning_rate = parse_double(kv);
            lr_set = true;
        } else if (k == "train.approx_learning_rate") {
            spec.train.approx_learning_rate = parse_double(kv);
            approx_lr_set = true;
        } else if (k == "train.optimizer") {
            if (kv.value == "sgd") {
                spec.train.optimizer = OptimizerState::Kind::Sgd;
            } else if (kv.value == "adam") {
                spec.train.optimizer = OptimizerState::Kind::Adam;
            } else {
                throw ConfigError("train.optimizer must be sgd or adam", kv.line, kv.value_column);
            }
        } else if (k == "train.hidden") {
            spec.train.hidden.clear();
            for (const std::string& s : split(kv.value, ',')) {
                KeyValue num = kv;
                num.value = s;
                spec.train.hidden.push_back(parse_count(num));
            }
        } else if (k == "train.dropout") {
            spec.train.dropout = parse_double(kv);
            if (spec.train.dropout < 0.0 || spec.train.dropout >= 1.0)
                throw ConfigError("train.dropout must be in [0, 1)", kv.line, kv.value_column);
        } else if (k == "train.max_loss_sweep_interval") {
            spec.train.max_loss_sweep_interval = parse_count(kv);
        } else if (k == "train.history_window") {
            spec.train.history_window = parse_count(kv);
        } else if (k == "train.lstm_hidden") {
            spec.train.lstm_hidden = parse_count(kv);
        } else if (k == "train.embed_dim") {
            spec.train.embed_dim = parse_count(kv);
        } else if (k == "train.normalize_by_dataset_size") {
            spec.train.normalize_by_dataset_size = parse_bool(kv);
        } else if (k == "train.record_timing") {
            spec.train.record_timing = parse_bool(kv);
        } else if (k == "summary.loss_threshold") {
            spec.summary_loss_threshold = parse_double(kv);
        } else if (k == "output_dir") {
            spec.output_dir = kv.value;
        } else {
            throw ConfigError("unknown key '" + k + "'", kv.line, 1);
        }
    }

    if (spec.cells.empty()) throw ConfigError("config needs at least one 'cell' line");
    if (spec.seeds.empty()) spec.seeds.push_back(1);
    if (spec.source == ExperimentSpec::Source::Idx &&
        (spec.images_path.empty() || spec.labels_path.empty()))
        throw ConfigError("dataset.source = idx requires dataset.images and dataset.labels");
    if (lr_set && !approx_lr_set) spec.train.approx_learning_rate = spec.train.learning_rate;
    return spec;
}

ExperimentSpec parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("parse_config: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

std::string default_config_text() {
    return R"(# istrain experiment configuration
#
# Dataset: either a synthetic Gaussian-blob problem or an IDX image/label
# pair (e.g. MNIST).
dataset.source = synthetic
dataset.n = 1024
dataset.dims = 2
dataset.classes = 2
dataset.noise = 0.4
dataset.radius = 2.0
# Fraction of samples drawn with 3x noise; these rare hard points keep the
# max-loss story interesting.
dataset.hard_fraction = 0.05
dataset.seed = 7
# dataset.source = idx
# dataset.images = train-images-idx3-ubyte
# dataset.labels = train-labels-idx1-ubyte

# One cell per (strategy, k, smoothing) combination. Strategies: uniform,
# loss, gnorm, approx. k <= 1 (k = 1 is the unbiased estimator). Smoothing:
# adaptive (half the EMA mean loss) or constant:<c> (0.5, 1 and 2.5 are the
# usual sweep values).
cell = loss k=0.5 smoothing=adaptive
cell = uniform k=1 smoothing=adaptive

# Each cell runs once per seed; the summary aggregates over runs.
seeds = 1,2,3

train.iterations = 2000
train.batch_size = 32
# Candidate pool size = pool_factor * batch_size (2B).
train.pool_factor = 2.0
train.ema_decay = 0.99
train.learning_rate = 0.001
# Defaults to train.learning_rate when omitted.
# train.approx_learning_rate = 0.001
train.optimizer = adam
train.hidden = 16,16
train.dropout = 0.0
train.max_loss_sweep_interval = 300
train.history_window = 10
# Wall-clock measurement makes run CSVs nondeterministic; leave off for
# byte-reproducible runs.
train.record_timing = false

summary.loss_threshold = 0.5
output_dir = runs
)";
}

}  // namespace istrain
