#include "gap/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "gap/error.hpp"
#include "gap/gap_parallel.hpp"
#include "gap/rng.hpp"

namespace gap {

namespace {

// section -> allowed keys. Anything else is a schema violation.
const std::map<std::string, std::set<std::string>> kSchema = {
    {"run", {"method", "seed", "output_dir", "run_id"}},
    {"model", {"layers"}},
    {"data",
     {"kind", "samples", "teacher_layers", "noise", "val_fraction",
      "train_images", "train_labels", "val_images", "val_labels"}},
    {"optimizer",
     {"lr", "momentum", "weight_decay", "schedule", "warmup_epochs"}},
    {"sparsity", {"ratio", "distribution", "granularity", "exempt_layers"}},
    {"gap",
     {"kappa", "steps", "epochs_per_step", "finetune_epochs", "partition",
      "batch_size", "probe_samples", "worker_timeout_ms"}},
    {"baseline",
     {"budget_epochs", "batch_size", "gmp_start", "gmp_end", "gmp_interval",
      "explore_fraction", "oneshot_split", "dense_phases"}},
    {"coverage", {"n", "per_step", "trials", "seed"}},
    {"diagnose", {"probe_samples", "batch_size"}},
};

const std::set<std::string> kMethods = {
    "cgap",  "pgap", "dense", "one-shot", "gmp", "static-random",
    "random-explore"};

struct KeyValue {
  std::string value;
  int line;
};

using SectionMap = std::map<std::string, std::map<std::string, KeyValue>>;

std::string trim(const std::string &s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

SectionMap parse_sections(const std::string &text) {
  SectionMap sections;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(line_no) +
                          ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!kSchema.count(section))
        throw ConfigError("line " + std::to_string(line_no) +
                          ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected key = value");
    if (section.empty())
      throw ConfigError("line " + std::to_string(line_no) +
                        ": key outside any section");
    const std::string key = trim(line.substr(0, eq));
    if (!kSchema.at(section).count(key))
      throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" +
                        key + "' in section [" + section + "]");
    sections[section][key] = {trim(line.substr(eq + 1)), line_no};
  }
  return sections;
}

class Reader {
public:
  explicit Reader(const SectionMap &sections) : sections_(sections) {}

  bool has(const std::string &section, const std::string &key) const {
    auto s = sections_.find(section);
    return s != sections_.end() && s->second.count(key);
  }

  std::string str(const std::string &section, const std::string &key,
                  const std::string &fallback) const {
    if (!has(section, key)) return fallback;
    return sections_.at(section).at(key).value;
  }

  std::string required(const std::string &section, const std::string &key) const {
    if (!has(section, key))
      throw ConfigError("missing required key [" + section + "] " + key);
    return sections_.at(section).at(key).value;
  }

  double num(const std::string &section, const std::string &key,
             double fallback) const {
    if (!has(section, key)) return fallback;
    return to_double(section, key);
  }

  long integer(const std::string &section, const std::string &key,
               long fallback) const {
    if (!has(section, key)) return fallback;
    const double v = to_double(section, key);
    const long n = static_cast<long>(v);
    if (static_cast<double>(n) != v)
      throw ConfigError(where(section, key) + ": expected an integer");
    return n;
  }

  std::vector<std::size_t> size_list(const std::string &section,
                                     const std::string &key) const {
    std::vector<std::size_t> out;
    if (!has(section, key)) return out;
    std::istringstream in(sections_.at(section).at(key).value);
    long v;
    while (in >> v) {
      if (v <= 0) throw ConfigError(where(section, key) + ": sizes must be positive");
      out.push_back(static_cast<std::size_t>(v));
    }
    if (!in.eof()) throw ConfigError(where(section, key) + ": expected integers");
    return out;
  }

  std::vector<int> int_list(const std::string &section,
                            const std::string &key) const {
    std::vector<int> out;
    if (!has(section, key)) return out;
    std::istringstream in(sections_.at(section).at(key).value);
    int v;
    while (in >> v) out.push_back(v);
    if (!in.eof()) throw ConfigError(where(section, key) + ": expected integers");
    return out;
  }

private:
  std::string where(const std::string &section, const std::string &key) const {
    return "line " + std::to_string(sections_.at(section).at(key).line) +
           " ([" + section + "] " + key + ")";
  }

  double to_double(const std::string &section, const std::string &key) const {
    const std::string &raw = sections_.at(section).at(key).value;
    try {
      std::size_t used = 0;
      const double v = std::stod(raw, &used);
      if (used != raw.size()) throw std::invalid_argument(raw);
      return v;
    } catch (const std::exception &) {
      throw ConfigError(where(section, key) + ": expected a number, got '" +
                        raw + "'");
    }
  }

  const SectionMap &sections_;
};

} // namespace

ExperimentConfig parse_experiment_config(const std::string &text) {
  const SectionMap sections = parse_sections(text);
  const Reader reader(sections);
  ExperimentConfig config;

  config.method = reader.str("run", "method", "cgap");
  if (!kMethods.count(config.method))
    throw ConfigError("unknown method '" + config.method + "'");
  config.seed = static_cast<std::uint64_t>(reader.integer("run", "seed", 0));
  config.output_dir = reader.str("run", "output_dir", ".");
  config.run_id =
      reader.str("run", "run_id", config.method + "-s" + std::to_string(config.seed));
  for (char c : config.run_id)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' &&
        c != '.')
      throw ConfigError("run_id may use only letters, digits, '-', '_', '.'");

  config.model_layers = reader.size_list("model", "layers");
  if (config.model_layers.size() < 2)
    throw ConfigError("[model] layers needs at least two sizes");

  config.data.kind = reader.str("data", "kind", "synthetic");
  if (config.data.kind != "synthetic" && config.data.kind != "idx")
    throw ConfigError("[data] kind must be synthetic or idx");
  config.data.samples =
      static_cast<std::size_t>(reader.integer("data", "samples", 1000));
  config.data.teacher_layers = reader.size_list("data", "teacher_layers");
  if (config.data.teacher_layers.empty())
    config.data.teacher_layers = config.model_layers;
  config.data.noise = reader.num("data", "noise", 0.0);
  config.data.val_fraction = reader.num("data", "val_fraction", 0.2);
  config.data.train_images = reader.str("data", "train_images", "");
  config.data.train_labels = reader.str("data", "train_labels", "");
  config.data.val_images = reader.str("data", "val_images", "");
  config.data.val_labels = reader.str("data", "val_labels", "");
  if (config.data.kind == "idx" &&
      (config.data.train_images.empty() || config.data.train_labels.empty()))
    throw ConfigError("[data] idx needs train_images and train_labels");

  config.optimizer.learning_rate = reader.num("optimizer", "lr", 0.1);
  config.optimizer.momentum = reader.num("optimizer", "momentum", 0.0);
  config.optimizer.weight_decay = reader.num("optimizer", "weight_decay", 0.0);
  const std::string schedule = reader.str("optimizer", "schedule", "constant");
  if (schedule == "constant")
    config.optimizer.schedule = LrSchedule::Constant;
  else if (schedule == "cosine")
    config.optimizer.schedule = LrSchedule::CosineWarmup;
  else
    throw ConfigError("[optimizer] schedule must be constant or cosine");
  config.optimizer.warmup_epochs =
      static_cast<int>(reader.integer("optimizer", "warmup_epochs", 0));
  validate_optimizer(config.optimizer);

  config.policy.ratio = reader.num("sparsity", "ratio", 0.0);
  const std::string dist = reader.str("sparsity", "distribution", "uniform");
  if (dist == "uniform")
    config.policy.distribution = Distribution::Uniform;
  else if (dist == "non-uniform")
    config.policy.distribution = Distribution::NonUniform;
  else
    throw ConfigError("[sparsity] distribution must be uniform or non-uniform");
  const std::string gran = reader.str("sparsity", "granularity", "element");
  if (gran == "element")
    config.policy.granularity = Granularity::Element;
  else if (gran == "block8")
    config.policy.granularity = Granularity::Block;
  else
    throw ConfigError("[sparsity] granularity must be element or block8");
  for (int id : reader.int_list("sparsity", "exempt_layers"))
    config.policy.exempt_layers.insert(id);
  validate_policy(config.policy);

  config.gap.partitions = static_cast<int>(reader.integer("gap", "kappa", 1));
  config.gap.steps = static_cast<int>(reader.integer("gap", "steps", 1));
  config.gap.epochs_per_step =
      static_cast<int>(reader.integer("gap", "epochs_per_step", 1));
  config.gap.finetune_epochs =
      static_cast<int>(reader.integer("gap", "finetune_epochs", 0));
  const std::string strategy = reader.str("gap", "partition", "contiguous");
  if (strategy == "contiguous")
    config.gap.strategy = PartitionStrategy::Contiguous;
  else if (strategy == "random")
    config.gap.strategy = PartitionStrategy::Random;
  else
    throw ConfigError("[gap] partition must be contiguous or random");
  config.gap.batch_size =
      static_cast<std::size_t>(reader.integer("gap", "batch_size", 32));
  config.gap.probe_samples =
      static_cast<std::size_t>(reader.integer("gap", "probe_samples", 512));
  config.gap.worker_timeout_ms =
      static_cast<int>(reader.integer("gap", "worker_timeout_ms", 60000));
  config.gap.policy = config.policy;
  config.gap.optimizer = config.optimizer;
  config.gap.seed = config.seed;

  config.baseline.budget_epochs =
      static_cast<int>(reader.integer("baseline", "budget_epochs", 1));
  config.baseline.batch_size = static_cast<std::size_t>(
      reader.integer("baseline", "batch_size",
                     static_cast<long>(config.gap.batch_size)));
  config.baseline.gmp.start_epoch =
      static_cast<int>(reader.integer("baseline", "gmp_start", 0));
  config.baseline.gmp.end_epoch =
      static_cast<int>(reader.integer("baseline", "gmp_end",
                                      config.baseline.budget_epochs / 2));
  config.baseline.gmp.interval =
      static_cast<int>(reader.integer("baseline", "gmp_interval", 1));
  config.baseline.explore_fraction =
      reader.num("baseline", "explore_fraction", 0.1);
  config.baseline.oneshot_split = reader.num("baseline", "oneshot_split", 0.5);
  for (int v : reader.int_list("baseline", "dense_phases"))
    config.baseline.dense_phases.push_back(v);
  config.baseline.policy = config.policy;
  config.baseline.optimizer = config.optimizer;
  config.baseline.seed = config.seed;

  config.coverage.n = static_cast<int>(reader.integer("coverage", "n", 10));
  config.coverage.per_step =
      static_cast<int>(reader.integer("coverage", "per_step", 1));
  config.coverage.trials =
      static_cast<int>(reader.integer("coverage", "trials", 2000));

  config.diagnose.probe_samples = static_cast<std::size_t>(
      reader.integer("diagnose", "probe_samples", 512));
  config.diagnose.batch_size =
      static_cast<std::size_t>(reader.integer("diagnose", "batch_size", 32));

  return config;
}

ExperimentConfig load_experiment_config(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_experiment_config(buffer.str());
}

Model build_model(const ExperimentConfig &config) {
  Rng rng(derive_seed(config.seed, {kStreamInitWeights}));
  return Model::mlp(config.model_layers, rng);
}

Dataset build_dataset(const ExperimentConfig &config) {
  if (config.data.kind == "idx") {
    Dataset train = load_idx(config.data.train_images, config.data.train_labels);
    if (!config.data.val_images.empty()) {
      const Dataset val = load_idx(config.data.val_images, config.data.val_labels);
      attach_validation(train, val);
    } else if (config.data.val_fraction > 0.0) {
      split_validation(train, config.data.val_fraction,
                       derive_seed(config.seed, {kStreamValSplit}));
    }
    return train;
  }
  SyntheticSpec spec;
  spec.teacher_layers = config.data.teacher_layers;
  spec.samples = config.data.samples;
  spec.label_noise = config.data.noise;
  spec.seed = config.seed;
  spec.val_fraction = config.data.val_fraction;
  return make_synthetic(spec);
}

RunOutput run_experiment(const ExperimentConfig &config, Model &model,
                         const Dataset &data) {
  if (config.method == "cgap") {
    validate_gap_config(config.gap, model);
    return run_cgap(config.gap, model, data, config.run_id);
  }
  if (config.method == "pgap") {
    validate_gap_config(config.gap, model);
    return run_pgap(config.gap, model, data, config.run_id);
  }
  if (config.method == "dense")
    return run_dense(config.baseline, model, data, config.run_id);
  if (config.method == "one-shot")
    return run_one_shot(config.baseline, model, data, config.run_id);
  if (config.method == "gmp")
    return run_gmp(config.baseline, model, data, config.run_id);
  if (config.method == "static-random")
    return run_static_random(config.baseline, model, data, config.run_id);
  if (config.method == "random-explore")
    return run_random_explore(config.baseline, model, data, config.run_id);
  throw ConfigError("unknown method '" + config.method + "'");
}

} // namespace gap
