#include "cdsl/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace cdsl::protocol {

std::string_view to_string(DistillOn d) { return d == DistillOn::logits ? "logits" : "representation"; }

ConfigError::ConfigError(std::string field, std::size_t line, const std::string& message)
    : Error(line ? "config line " + std::to_string(line) + ", field '" + field + "': " + message
                 : "config field '" + field + "': " + message),
      field_(std::move(field)),
      line_(line) {}

void RunConfig::validate() const {
  if (batch_size < 2) throw ConfigError("batch_size", 0, "must be >= 2");
  if (!disable_memory && !stationary && replay_n >= batch_size) {
    throw ConfigError("replay_n", 0, "must be smaller than batch_size");
  }
  if (memory_capacity == 0) throw ConfigError("memory_capacity", 0, "must be positive");
  if (!(source_fraction > 0.0 && source_fraction < 1.0)) throw ConfigError("source_fraction", 0, "must lie in (0, 1)");
  try {
    sgd.validate();
  } catch (const Error& e) {
    throw ConfigError("sgd", 0, e.what());
  }
  try {
    randmix.validate();
  } catch (const Error& e) {
    throw ConfigError("randmix", 0, e.what());
  }
  try {
    labeler.validate();
  } catch (const Error& e) {
    throw ConfigError("labeler", 0, e.what());
  }
  if (labeler.method == labeler::Method::ground_truth) throw ConfigError("labeler", 0, "not a pseudo labeler");
  if (!bottleneck_widths.empty() && bottleneck_widths.size() != 2) {
    throw ConfigError("bottleneck_widths", 0, "needs exactly two widths or none");
  }
}

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(std::string_view key, std::string_view text, std::size_t line) {
  const std::string s = trim(text);
  T v{};
  if constexpr (std::is_floating_point_v<T>) {
    try {
      std::size_t pos = 0;
      v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw ConfigError(std::string(key), line, "expected a number, got '" + s + "'");
    }
  } else {
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      throw ConfigError(std::string(key), line, "expected a non-negative integer, got '" + s + "'");
    }
  }
  return v;
}

bool parse_bool(std::string_view key, std::string_view text, std::size_t line) {
  const std::string s = trim(text);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError(std::string(key), line, "expected true or false, got '" + s + "'");
}

std::vector<std::size_t> parse_list(std::string_view key, std::string_view text, std::size_t line) {
  std::vector<std::size_t> out;
  std::string s = trim(text);
  if (s.empty()) return out;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(parse_number<std::size_t>(key, cell, line));
  return out;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string shortest(double v) {
  // nlohmann prints the shortest representation that round-trips.
  return nlohmann::json(v).dump();
}

}  // namespace

std::vector<std::string> config_keys() {
  return {"sequence",       "order",          "samples_per_domain", "epochs",          "steps_per_epoch",
          "batch_size",     "learning_rate",  "momentum",           "weight_decay",    "n_aug",
          "r_con",          "r_top",          "r_top_prime",        "labeler",         "memory_capacity",
          "replay_n",       "source_fraction", "extractor_widths",  "bottleneck_widths", "disable_randmix",
          "disable_pca",    "distill_on",     "stationary",         "disable_memory",  "disable_distill",
          "pca_source_form", "record_initial_row", "probe_labelers", "seed"};
}

void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value, std::size_t line) {
  const std::string k(key);
  auto num = [&]<class T>(T& field) { field = parse_number<T>(key, value, line); };
  auto flag = [&](bool& field) { field = parse_bool(key, value, line); };

  if (k == "sequence") {
    cfg.sequence = trim(value);
    if (cfg.sequence.empty()) throw ConfigError(k, line, "must not be empty");
  } else if (k == "order") {
    cfg.order = parse_list(key, value, line);
  } else if (k == "samples_per_domain") {
    num(cfg.samples_per_domain);
  } else if (k == "epochs") {
    num(cfg.epochs);
  } else if (k == "steps_per_epoch") {
    num(cfg.steps_per_epoch);
  } else if (k == "batch_size") {
    num(cfg.batch_size);
  } else if (k == "learning_rate") {
    num(cfg.sgd.learning_rate);
  } else if (k == "momentum") {
    num(cfg.sgd.momentum);
  } else if (k == "weight_decay") {
    num(cfg.sgd.weight_decay);
  } else if (k == "n_aug") {
    num(cfg.randmix.n_aug);
  } else if (k == "r_con") {
    num(cfg.randmix.r_con);
  } else if (k == "r_top") {
    num(cfg.labeler.r_top);
  } else if (k == "r_top_prime") {
    num(cfg.labeler.r_top_prime);
  } else if (k == "labeler") {
    try {
      cfg.labeler.method = labeler::parse_method(trim(value));
    } catch (const Error& e) {
      throw ConfigError(k, line, e.what());
    }
  } else if (k == "memory_capacity") {
    num(cfg.memory_capacity);
  } else if (k == "replay_n") {
    num(cfg.replay_n);
  } else if (k == "source_fraction") {
    num(cfg.source_fraction);
  } else if (k == "extractor_widths") {
    cfg.extractor_widths = parse_list(key, value, line);
  } else if (k == "bottleneck_widths") {
    cfg.bottleneck_widths = parse_list(key, value, line);
  } else if (k == "disable_randmix") {
    flag(cfg.disable_randmix);
  } else if (k == "disable_pca") {
    flag(cfg.disable_pca);
  } else if (k == "distill_on") {
    const std::string v = trim(value);
    if (v == "logits") {
      cfg.distill_on = DistillOn::logits;
    } else if (v == "representation") {
      cfg.distill_on = DistillOn::representation;
    } else {
      throw ConfigError(k, line, "expected logits or representation, got '" + v + "'");
    }
  } else if (k == "stationary") {
    flag(cfg.stationary);
  } else if (k == "disable_memory") {
    flag(cfg.disable_memory);
  } else if (k == "disable_distill") {
    flag(cfg.disable_distill);
  } else if (k == "pca_source_form") {
    flag(cfg.pca_source_form);
  } else if (k == "record_initial_row") {
    flag(cfg.record_initial_row);
  } else if (k == "probe_labelers") {
    flag(cfg.probe_labelers);
  } else if (k == "seed") {
    num(cfg.seed);
  } else {
    throw ConfigError(k, line, "unknown key");
  }
}

namespace {

std::string json_value_text(const std::string& key, const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number()) return v.dump();
  if (v.is_array()) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number_unsigned() && !v[i].is_number_integer()) {
        throw ConfigError(key, 0, "list entries must be integers");
      }
      s += (i ? "," : "") + v[i].dump();
    }
    return s;
  }
  throw ConfigError(key, 0, "unsupported JSON value " + v.dump());
}

}  // namespace

RunConfig parse_config(std::string_view text, std::vector<std::string>* keys_set) {
  RunConfig cfg;
  const std::string body = trim(text);
  if (!body.empty() && body.front() == '{') {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("<document>", 0, std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("<document>", 0, "expected a JSON object");
    for (const auto& [key, value] : doc.items()) {
      apply_setting(cfg, key, json_value_text(key, value));
      if (keys_set) keys_set->push_back(key);
    }
  } else {
    std::stringstream ss{std::string(text)};
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(ss, raw)) {
      ++line_no;
      auto hash = raw.find('#');
      std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
      if (line.empty()) continue;
      auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError(line, line_no, "expected 'key = value'");
      const std::string key = trim(line.substr(0, eq));
      apply_setting(cfg, key, line.substr(eq + 1), line_no);
      if (keys_set) keys_set->push_back(key);
    }
  }
  return cfg;
}

RunConfig load_config(const std::string& path, std::vector<std::string>* keys_set) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", 0, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), keys_set);
}

namespace {

std::vector<std::pair<std::string, nlohmann::json>> fields(const RunConfig& c) {
  return {
      {"sequence", c.sequence},
      {"order", c.order},
      {"samples_per_domain", c.samples_per_domain},
      {"epochs", c.epochs},
      {"steps_per_epoch", c.steps_per_epoch},
      {"batch_size", c.batch_size},
      {"learning_rate", c.sgd.learning_rate},
      {"momentum", c.sgd.momentum},
      {"weight_decay", c.sgd.weight_decay},
      {"n_aug", c.randmix.n_aug},
      {"r_con", c.randmix.r_con},
      {"r_top", c.labeler.r_top},
      {"r_top_prime", c.labeler.r_top_prime},
      {"labeler", std::string(labeler::to_string(c.labeler.method))},
      {"memory_capacity", c.memory_capacity},
      {"replay_n", c.replay_n},
      {"source_fraction", c.source_fraction},
      {"extractor_widths", c.extractor_widths},
      {"bottleneck_widths", c.bottleneck_widths},
      {"disable_randmix", c.disable_randmix},
      {"disable_pca", c.disable_pca},
      {"distill_on", std::string(to_string(c.distill_on))},
      {"stationary", c.stationary},
      {"disable_memory", c.disable_memory},
      {"disable_distill", c.disable_distill},
      {"pca_source_form", c.pca_source_form},
      {"record_initial_row", c.record_initial_row},
      {"probe_labelers", c.probe_labelers},
      {"seed", c.seed},
  };
}

}  // namespace

std::string to_json(const RunConfig& cfg) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::object();
  for (auto& [k, v] : fields(cfg)) doc[k] = nlohmann::ordered_json::parse(v.dump());
  return doc.dump(2);
}

std::string to_text(const RunConfig& cfg) {
  std::string out;
  for (auto& [k, v] : fields(cfg)) {
    std::string value;
    if (v.is_array()) {
      value = join(v.get<std::vector<std::size_t>>());
    } else if (v.is_string()) {
      value = v.get<std::string>();
    } else if (v.is_number_float()) {
      value = shortest(v.get<double>());
    } else {
      value = v.dump();
    }
    out += k + " = " + value + "\n";
  }
  return out;
}

}  // namespace cdsl::protocol
