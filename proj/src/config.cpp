#include "cpgnn/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "cpgnn/binary_io.hpp"
#include "cpgnn/error.hpp"

namespace cpgnn {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  throw ConfigError("config key '" + std::string(key) + "': '" + std::string(value) + "' is not " +
                    std::string(expected));
}

template <typename T>
T parse_integer(std::string_view key, std::string_view v) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

double parse_double(std::string_view key, std::string_view v) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) bad_value(key, v, "a finite number");
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "a boolean");
}

template <typename T>
ConfigField integer_field(std::string_view key, std::string_view help, T RunConfig::*outer) {
  return {key, help, false, [outer](const RunConfig& c) { return std::to_string(c.*outer); },
          [outer, key](RunConfig& c, std::string_view v) { c.*outer = parse_integer<T>(key, v); }};
}

template <typename Sub, typename T>
ConfigField nested_integer(std::string_view key, std::string_view help, Sub RunConfig::*outer, T Sub::*inner) {
  return {key, help, false, [=](const RunConfig& c) { return std::to_string((c.*outer).*inner); },
          [=](RunConfig& c, std::string_view v) { (c.*outer).*inner = parse_integer<T>(key, v); }};
}

template <typename Sub, typename T>
ConfigField nested_real(std::string_view key, std::string_view help, Sub RunConfig::*outer, T Sub::*inner) {
  return {key, help, false, [=](const RunConfig& c) { return format_real(static_cast<double>((c.*outer).*inner)); },
          [=](RunConfig& c, std::string_view v) { (c.*outer).*inner = static_cast<T>(parse_double(key, v)); }};
}

template <typename Sub>
ConfigField nested_bool(std::string_view key, std::string_view help, Sub RunConfig::*outer, bool Sub::*inner) {
  return {key, help, false, [=](const RunConfig& c) { return std::string((c.*outer).*inner ? "true" : "false"); },
          [=](RunConfig& c, std::string_view v) { (c.*outer).*inner = parse_bool(key, v); }};
}

ConfigField path_field(std::string_view key, std::string_view help, std::string RunConfig::*member) {
  return {key, help, true, [member](const RunConfig& c) { return c.*member; },
          [member](RunConfig& c, std::string_view v) { c.*member = std::string(v); }};
}

std::vector<ConfigField> make_fields() {
  std::vector<ConfigField> f;
  f.push_back(path_field("train_path", "train split, head<TAB>relation<TAB>tail", &RunConfig::train_path));
  f.push_back(path_field("valid_path", "validation split", &RunConfig::valid_path));
  f.push_back(path_field("test_path", "test split", &RunConfig::test_path));
  f.push_back(path_field("kg_path", "serialized knowledge graph written by `ingest`", &RunConfig::kg_path));
  f.push_back(path_field("proximity_path", "serialized proximity graph written by `build-proximity`",
                         &RunConfig::proximity_path));
  f.push_back(path_field("output_dir", "directory for run artifacts", &RunConfig::output_dir));

  f.push_back(nested_integer("max_answer_set", "M: answer sets of this size or larger add no proximity (M > 2)",
                             &RunConfig::proximity, &ProximityConfig::max_answer_set));
  f.push_back(nested_real("threshold", "I: entity pairs are linked when SPM is strictly greater",
                          &RunConfig::proximity, &ProximityConfig::threshold));

  f.push_back(nested_integer("dim", "embedding dimension d", &RunConfig::encoder, &EncoderConfig::dim));
  f.push_back(nested_integer("kg_layers", "relation-aware GNN layers", &RunConfig::encoder, &EncoderConfig::kg_layers));
  f.push_back(nested_integer("proximity_layers", "proximity GNN layers", &RunConfig::encoder,
                             &EncoderConfig::proximity_layers));
  f.push_back({"composition", "entity/relation composition: additive|multiplicative|mlp", false,
               [](const RunConfig& c) { return std::string(to_string(c.encoder.composition)); },
               [](RunConfig& c, std::string_view v) { c.encoder.composition = parse_composition(v); }});
  f.push_back({"weight_scheme", "neighbor weights: prior|gcn|attention", false,
               [](const RunConfig& c) { return std::string(to_string(c.encoder.weight_scheme)); },
               [](RunConfig& c, std::string_view v) { c.encoder.weight_scheme = parse_weight_scheme(v); }});
  f.push_back(nested_bool("kg_only", "ablation: skip the proximity GNN", &RunConfig::encoder, &EncoderConfig::kg_only));

  f.push_back(nested_integer("reshape_height", "decoder reshape rows per embedding (0 = auto)", &RunConfig::decoder,
                             &DecoderConfig::reshape_height));
  f.push_back(nested_integer("reshape_width", "decoder reshape columns (0 = auto)", &RunConfig::decoder,
                             &DecoderConfig::reshape_width));
  f.push_back(nested_integer("filters", "convolution filters", &RunConfig::decoder, &DecoderConfig::filters));
  f.push_back(nested_integer("kernel", "square convolution kernel size", &RunConfig::decoder, &DecoderConfig::kernel));
  f.push_back(nested_real("input_dropout", "dropout on the stacked input map", &RunConfig::decoder,
                          &DecoderConfig::input_dropout));
  f.push_back(nested_real("feature_dropout", "dropout on convolution feature maps", &RunConfig::decoder,
                          &DecoderConfig::feature_dropout));
  f.push_back(nested_real("hidden_dropout", "dropout on the projected hidden vector", &RunConfig::decoder,
                          &DecoderConfig::hidden_dropout));
  f.push_back(nested_real("label_smoothing", "target smoothing epsilon (0 disables)", &RunConfig::decoder,
                          &DecoderConfig::label_smoothing));

  f.push_back(nested_integer("batch_size", "queries per batch", &RunConfig::train, &TrainConfig::batch_size));
  f.push_back(nested_real("learning_rate", "optimizer step size", &RunConfig::train, &TrainConfig::learning_rate));
  f.push_back({"optimizer", "sgd|adam", false,
               [](const RunConfig& c) { return std::string(to_string(c.train.optimizer)); },
               [](RunConfig& c, std::string_view v) { c.train.optimizer = parse_optimizer(v); }});
  f.push_back(nested_integer("epochs", "training epochs", &RunConfig::train, &TrainConfig::epochs));
  f.push_back(nested_real("edge_drop_rate", "fraction of message-passing edges removed per batch", &RunConfig::train,
                          &TrainConfig::edge_drop_rate));
  f.push_back(nested_bool("drop_proximity_edges", "apply the edge removal to the proximity graph too",
                          &RunConfig::train, &TrainConfig::drop_proximity_edges));
  f.push_back(nested_integer("eval_every", "validation interval in epochs (0 = never)", &RunConfig::train,
                             &TrainConfig::eval_every));
  f.push_back(nested_integer("seed", "seed for initialization, shuffling and dropout", &RunConfig::train,
                             &TrainConfig::seed));
  f.push_back(integer_field("eval_batch_size", "queries scored together at evaluation", &RunConfig::eval_batch_size));
  f.push_back({"off_grid", "allow values outside the published tuning grid", false,
               [](const RunConfig& c) { return std::string(c.off_grid ? "true" : "false"); },
               [](RunConfig& c, std::string_view v) { c.off_grid = parse_bool("off_grid", v); }});
  return f;
}

const ConfigField& field(std::string_view key) {
  for (const auto& f : config_fields()) {
    if (f.key == key) return f;
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

template <typename T>
void require_in(std::string_view key, T value, std::initializer_list<T> allowed, const std::string& shown) {
  if (std::find(allowed.begin(), allowed.end(), value) == allowed.end()) {
    throw ConfigError(std::string(key) + "=" + shown + " is outside the tuning grid (set off_grid=true to allow)");
  }
}

}  // namespace

std::string format_real(double v) {
  char buf[64];
  for (int precision = 1; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = make_fields();
  return fields;
}

RunConfig::RunConfig() {
  encoder.dim = 500;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& f : config_fields()) {
    out += f.key;
    out += '=';
    out += f.get(*this);
    out += '\n';
  }
  return out;
}

RunConfig RunConfig::from_text(std::string_view text) {
  RunConfig c;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    const auto key = trim(line.substr(0, eq));
    if (!seen.insert(std::string(key)).second) throw ConfigError("config key '" + std::string(key) + "' repeated");
    c.set(key, trim(line.substr(eq + 1)));
  }
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

void RunConfig::set(std::string_view key, std::string_view value) { field(key).set(*this, value); }

std::string RunConfig::get(std::string_view key) const { return field(key).get(*this); }

std::uint64_t RunConfig::digest() const {
  Fnv1a h;
  for (const auto& f : config_fields()) {
    if (f.is_path) continue;
    h.update(f.key);
    h.update("=");
    h.update(f.get(*this));
    h.update("\n");
  }
  return h.digest();
}

void RunConfig::validate() const {
  if (proximity.max_answer_set <= 2) {
    throw ConfigError("max_answer_set must exceed 2 (the proximity measure divides by M - 2)");
  }
  if (!(proximity.threshold >= 0)) throw ConfigError("threshold must be >= 0");
  encoder.validate(off_grid);
  DecoderConfig d = decoder;
  d.resolve(encoder.dim);
  if (train.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(train.learning_rate >= 0)) throw ConfigError("learning_rate must be >= 0");
  if (train.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (!(train.edge_drop_rate >= 0 && train.edge_drop_rate <= 1)) throw ConfigError("edge_drop_rate must lie in [0, 1]");
  if (train.eval_every < 0) throw ConfigError("eval_every must be >= 0");
  if (eval_batch_size == 0) throw ConfigError("eval_batch_size must be positive");
  if (off_grid) return;
  require_in<std::size_t>("batch_size", train.batch_size, {256, 512, 1024}, get("batch_size"));
  require_in<Real>("learning_rate", train.learning_rate, {Real(1e-4), Real(3e-4), Real(5e-3)}, get("learning_rate"));
  require_in<std::size_t>("dim", encoder.dim, {500, 1000}, get("dim"));
  require_in<double>("edge_drop_rate", train.edge_drop_rate, {0.1, 0.3, 0.5, 0.7, 1.0}, get("edge_drop_rate"));
  require_in<int>("max_answer_set", proximity.max_answer_set, {25, 50, 100, 500}, get("max_answer_set"));
  require_in<double>("threshold", proximity.threshold, {0.5, 1.0, 3.0, 5.0}, get("threshold"));
}

}  // namespace cpgnn
