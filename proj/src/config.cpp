#include "metainv/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "metainv/csv.hpp"

namespace metainv {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

TomlValue parse_value(const std::string& raw, int line_no) {
  TomlValue v;
  std::string s = trim(raw);
  if (s.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty value");
  if (s.front() == '[') {
    if (s.back() != ']')
      throw ConfigError("config line " + std::to_string(line_no) + ": unterminated array");
    v.is_array = true;
    std::string inner = s.substr(1, s.size() - 2);
    std::string item;
    bool in_string = false;
    for (char c : inner) {
      if (c == '"') {
        in_string = !in_string;
        continue;
      }
      if (c == ',' && !in_string) {
        std::string t = trim(item);
        if (!t.empty()) v.array.push_back(t);
        item.clear();
      } else {
        item += c;
      }
    }
    std::string t = trim(item);
    if (!t.empty()) v.array.push_back(t);
    return v;
  }
  if (s.front() == '"') {
    if (s.size() < 2 || s.back() != '"')
      throw ConfigError("config line " + std::to_string(line_no) + ": unterminated string");
    v.is_string = true;
    v.raw = s.substr(1, s.size() - 2);
    return v;
  }
  v.raw = s;
  return v;
}

class ConfigReader {
 public:
  explicit ConfigReader(const TomlTable& table) : table_(table) {}

  bool has(const std::string& section, const std::string& key) const {
    auto sit = table_.find(section);
    return sit != table_.end() && sit->second.count(key) > 0;
  }

  const TomlValue& get(const std::string& section, const std::string& key) {
    consumed_.insert(section + "." + key);
    return table_.at(section).at(key);
  }

  std::string get_string(const std::string& sec, const std::string& key,
                         const std::string& fallback) {
    if (!has(sec, key)) return fallback;
    return get(sec, key).raw;
  }

  double get_double(const std::string& sec, const std::string& key, double fallback) {
    if (!has(sec, key)) return fallback;
    try {
      return std::stod(get(sec, key).raw);
    } catch (const std::exception&) {
      throw ConfigError("config: " + sec + "." + key + " is not a number");
    }
  }

  long get_long(const std::string& sec, const std::string& key, long fallback) {
    if (!has(sec, key)) return fallback;
    try {
      return std::stol(get(sec, key).raw);
    } catch (const std::exception&) {
      throw ConfigError("config: " + sec + "." + key + " is not an integer");
    }
  }

  std::vector<std::string> get_string_array(const std::string& sec, const std::string& key,
                                            std::vector<std::string> fallback) {
    if (!has(sec, key)) return fallback;
    const TomlValue& v = get(sec, key);
    if (!v.is_array) throw ConfigError("config: " + sec + "." + key + " must be an array");
    std::vector<std::string> out;
    for (const std::string& item : v.array) {
      std::string t = trim(item);
      if (!t.empty() && t.front() == '"' && t.back() == '"') t = t.substr(1, t.size() - 2);
      out.push_back(t);
    }
    return out;
  }

  void reject_unknown() const {
    for (const auto& [section, keys] : table_)
      for (const auto& [key, value] : keys) {
        (void)value;
        if (!consumed_.count(section + "." + key))
          throw ConfigError("config: unknown key [" + section + "] " + key);
      }
  }

 private:
  const TomlTable& table_;
  std::set<std::string> consumed_;
};

}  // namespace

TomlTable parse_toml(const std::string& text) {
  TomlTable table;
  std::string section;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string s = trim(strip_comment(line));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']')
        throw ConfigError("config line " + std::to_string(line_no) + ": bad section header");
      section = trim(s.substr(1, s.size() - 2));
      if (section.empty())
        throw ConfigError("config line " + std::to_string(line_no) + ": empty section name");
      table[section];
      continue;
    }
    std::size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(s.substr(0, eq));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    if (section.empty())
      throw ConfigError("config line " + std::to_string(line_no) + ": key outside a section");
    if (table[section].count(key))
      throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key " + key);
    table[section][key] = parse_value(s.substr(eq + 1), line_no);
  }
  return table;
}

TomlTable parse_toml_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_toml(ss.str());
}

ExperimentConfig config_from_toml(const TomlTable& table) {
  ConfigReader reader(table);
  ExperimentConfig cfg;

  cfg.kind = reader.get_string("experiment", "kind", "");
  if (!reader.has("experiment", "seed"))
    throw ConfigError("config: experiment.seed is required");
  cfg.seed = static_cast<std::uint64_t>(reader.get_long("experiment", "seed", 0));
  cfg.output_dir = reader.get_string("experiment", "output_dir", cfg.output_dir);

  cfg.model_family = reader.get_string("model", "family", cfg.model_family);
  cfg.depth = static_cast<int>(reader.get_long("model", "depth", cfg.depth));
  cfg.channels = static_cast<int>(reader.get_long("model", "channels", cfg.channels));

  cfg.inner.mode = loss_mode_from_name(
      reader.get_string("inner", "mode", loss_mode_name(cfg.inner.mode)));
  cfg.inner.steps = static_cast<int>(reader.get_long("inner", "steps", cfg.inner.steps));
  cfg.inner.optimizer = inner_optimizer_from_name(reader.get_string(
      "inner", "optimizer", cfg.inner.optimizer == InnerOptimizer::gd ? "gd" : "adam"));
  cfg.inner.step_size = reader.get_double("inner", "step_size", cfg.inner.step_size);
  cfg.inner.reg_lambda = reader.get_double("inner", "reg_lambda", cfg.inner.reg_lambda);

  cfg.outer.step_size = reader.get_double("outer", "step_size", cfg.outer.step_size);
  cfg.outer.epochs = static_cast<int>(reader.get_long("outer", "epochs", cfg.outer.epochs));
  cfg.outer.batch_size =
      static_cast<int>(reader.get_long("outer", "batch_size", cfg.outer.batch_size));
  cfg.checkpoint_every =
      static_cast<int>(reader.get_long("outer", "checkpoint_every", cfg.checkpoint_every));

  cfg.data_path = reader.get_string("data", "path", cfg.data_path);
  cfg.patch_size = reader.get_long("data", "patch_size", cfg.patch_size);
  cfg.train_count = static_cast<int>(reader.get_long("data", "train_count", cfg.train_count));
  cfg.test_count = static_cast<int>(reader.get_long("data", "test_count", cfg.test_count));

  cfg.task_kinds = reader.get_string_array("tasks", "kinds", cfg.task_kinds);
  cfg.t1_sigma = reader.get_double("tasks", "t1_sigma", cfg.t1_sigma);
  cfg.t2_strength = reader.get_double("tasks", "t2_strength", cfg.t2_strength);
  cfg.t3_kernel_size = reader.get_long("tasks", "t3_kernel_size", cfg.t3_kernel_size);
  cfg.t3_kernel_path = reader.get_string("tasks", "t3_kernel_path", cfg.t3_kernel_path);
  cfg.t4_drop_fraction = reader.get_double("tasks", "t4_drop_fraction", cfg.t4_drop_fraction);
  cfg.t4_mask_path = reader.get_string("tasks", "t4_mask_path", cfg.t4_mask_path);
  cfg.sr_factor = reader.get_long("tasks", "sr_factor", cfg.sr_factor);
  cfg.mri_acceleration =
      static_cast<int>(reader.get_long("tasks", "mri_acceleration", cfg.mri_acceleration));
  cfg.mri_center_fraction =
      reader.get_double("tasks", "mri_center_fraction", cfg.mri_center_fraction);
  cfg.mri_mask_path = reader.get_string("tasks", "mri_mask_path", cfg.mri_mask_path);

  cfg.toy_grid = reader.get_long("toy", "grid", cfg.toy_grid);
  cfg.toy_length_scale = reader.get_double("toy", "length_scale", cfg.toy_length_scale);
  cfg.toy_mask_size = reader.get_long("toy", "mask_size", cfg.toy_mask_size);
  cfg.toy_train_samples =
      static_cast<int>(reader.get_long("toy", "train_samples", cfg.toy_train_samples));
  cfg.toy_test_samples =
      static_cast<int>(reader.get_long("toy", "test_samples", cfg.toy_test_samples));

  cfg.checkpoint_path = reader.get_string("finetune", "checkpoint", cfg.checkpoint_path);
  cfg.finetune_task = reader.get_string("finetune", "task", cfg.finetune_task);

  cfg.bayes_trials =
      static_cast<int>(reader.get_long("bayes_check", "trials", cfg.bayes_trials));
  cfg.bayes_dim = reader.get_long("bayes_check", "dim", cfg.bayes_dim);
  cfg.bayes_diag_trials =
      static_cast<int>(reader.get_long("bayes_check", "diag_trials", cfg.bayes_diag_trials));

  reader.reject_unknown();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  return config_from_toml(parse_toml_file(path));
}

void ExperimentConfig::validate() const {
  static const std::set<std::string> kinds{"toy", "train", "finetune", "eval", "bayes-check"};
  if (!kinds.count(kind))
    throw ConfigError("config: experiment.kind must be one of toy|train|finetune|eval|"
                      "bayes-check, got '" + kind + "'");
  if (model_family != "linear" && model_family != "pdnet")
    throw ConfigError("config: model.family must be linear or pdnet");
  if (depth < 1) throw ConfigError("config: model.depth must be >= 1");
  try {
    inner.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (outer.epochs < 0) throw ConfigError("config: outer.epochs must be >= 0");
  if (!data_path.empty() && !std::filesystem::exists(data_path))
    throw ConfigError("config: data.path does not exist: " + data_path);
  if (!t3_kernel_path.empty() && !std::filesystem::exists(t3_kernel_path))
    throw ConfigError("config: tasks.t3_kernel_path does not exist: " + t3_kernel_path);
  if (!t4_mask_path.empty() && !std::filesystem::exists(t4_mask_path))
    throw ConfigError("config: tasks.t4_mask_path does not exist: " + t4_mask_path);
  if (!mri_mask_path.empty() && !std::filesystem::exists(mri_mask_path))
    throw ConfigError("config: tasks.mri_mask_path does not exist: " + mri_mask_path);
  if (kind == "finetune" || kind == "eval") {
    if (checkpoint_path.empty())
      throw ConfigError("config: finetune.checkpoint is required for " + kind);
    if (!std::filesystem::exists(checkpoint_path))
      throw ConfigError("config: finetune.checkpoint does not exist: " + checkpoint_path);
  }
  if (kind == "toy") {
    if (toy_grid < toy_mask_size + 1)
      throw ConfigError("config: toy.grid must exceed toy.mask_size");
    if (toy_train_samples < 1 || toy_test_samples < 1)
      throw ConfigError("config: toy sample counts must be >= 1");
  }
  if (train_count < 1 || test_count < 1)
    throw ConfigError("config: data.train_count and data.test_count must be >= 1");
}

std::string canonical_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "kind=" << cfg.kind << "\nseed=" << cfg.seed << "\nmodel=" << cfg.model_family
     << "\ndepth=" << cfg.depth << "\nchannels=" << cfg.channels
     << "\ninner.mode=" << loss_mode_name(cfg.inner.mode) << "\ninner.steps=" << cfg.inner.steps
     << "\ninner.opt=" << (cfg.inner.optimizer == InnerOptimizer::gd ? "gd" : "adam")
     << "\ninner.step_size=" << format_double(cfg.inner.step_size)
     << "\ninner.reg_lambda=" << format_double(cfg.inner.reg_lambda)
     << "\nouter.step_size=" << format_double(cfg.outer.step_size)
     << "\nouter.epochs=" << cfg.outer.epochs << "\nouter.batch_size=" << cfg.outer.batch_size
     << "\ndata.path=" << cfg.data_path << "\ndata.patch=" << cfg.patch_size
     << "\ndata.train=" << cfg.train_count << "\ndata.test=" << cfg.test_count << "\ntasks=";
  for (const auto& k : cfg.task_kinds) os << k << ";";
  os << "\nt1_sigma=" << format_double(cfg.t1_sigma)
     << "\nt2_strength=" << format_double(cfg.t2_strength)
     << "\nt3_kernel_size=" << cfg.t3_kernel_size
     << "\nt4_drop=" << format_double(cfg.t4_drop_fraction)
     << "\nsr_factor=" << cfg.sr_factor << "\nmri_accel=" << cfg.mri_acceleration
     << "\nmri_center=" << format_double(cfg.mri_center_fraction)
     << "\ntoy.grid=" << cfg.toy_grid
     << "\ntoy.length_scale=" << format_double(cfg.toy_length_scale)
     << "\ntoy.mask=" << cfg.toy_mask_size << "\ntoy.train=" << cfg.toy_train_samples
     << "\ntoy.test=" << cfg.toy_test_samples << "\ncheckpoint=" << cfg.checkpoint_path
     << "\nfinetune.task=" << cfg.finetune_task << "\nbayes.trials=" << cfg.bayes_trials
     << "\nbayes.dim=" << cfg.bayes_dim << "\nbayes.diag=" << cfg.bayes_diag_trials << "\n";
  return os.str();
}

std::uint64_t fnv1a_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace metainv
