#ifndef MLKP_CONFIG_HPP
#define MLKP_CONFIG_HPP

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mlkp/mlkp_block.hpp"
#include "mlkp/synth.hpp"

namespace mlkp {

// Experiment configuration, read and written as line-oriented
// `section.key = value` text. Unknown keys are rejected by name;
// parse -> serialize -> parse is lossless.
struct RunConfig {
  // model
  std::vector<Index> backbone_channels{8, 16, 32};
  Index fusion_width = 64;
  int mlkp_order = 3;
  Index mlkp_rank2 = 64;
  Index mlkp_rank3 = 64;
  bool location_weight = true;
  Index location_hidden = 0;  // 0 = automatic (c/4)
  Index pool_size = 7;
  int classes = 3;

  // train
  Index iterations = 2000;
  double base_lr = 0.02;
  Index lr_decay_step = 1500;
  double lr_decay_factor = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  std::uint64_t train_seed = 42;
  Index rois_per_image = 32;
  double positive_fraction = 0.25;
  Index eval_every = 500;

  // data
  Index image_size = 128;
  int data_classes = 3;
  int min_objects = 1;
  int max_objects = 3;
  double min_size = 20.0;
  double max_size = 56.0;
  double noise = 0.08;
  std::uint64_t data_seed = 42;
  Index train_scenes = 500;
  Index eval_scenes = 100;

  // paths
  std::string weights_in;
  std::string weights_out = "weights.mlkp";
  std::string report_out;

  bool operator==(const RunConfig&) const = default;

  void validate() const {
    MLKP_CHECK(backbone_channels.size() == 3,
               "model.backbone_channels needs exactly 3 widths");
    for (auto c : backbone_channels)
      MLKP_CHECK(c >= 1, "backbone widths must be >= 1");
    MLKP_CHECK(classes == data_classes,
               "model.classes (" << classes << ") and data.classes ("
                                 << data_classes << ") must agree");
    MLKP_CHECK(pool_size >= 1, "model.pool_size must be >= 1");
    MLKP_CHECK(rois_per_image >= 1, "train.rois_per_image must be >= 1");
    MLKP_CHECK(positive_fraction >= 0.0 && positive_fraction <= 1.0,
               "train.positive_fraction outside [0, 1]");
    MLKP_CHECK(iterations >= 0, "train.iterations must be >= 0");
    MLKP_CHECK(train_scenes >= 1 && eval_scenes >= 1,
               "scene counts must be >= 1");
    mlkpConfig().validate();
    sceneSpec().validate();
  }

  SceneSpec sceneSpec() const {
    SceneSpec s;
    s.height = image_size;
    s.width = image_size;
    s.classes = data_classes;
    s.min_objects = min_objects;
    s.max_objects = max_objects;
    s.min_size = min_size;
    s.max_size = max_size;
    s.noise = noise;
    s.seed = data_seed;
    return s;
  }

  MLKPConfig mlkpConfig() const {
    MLKPConfig c;
    c.max_order = mlkp_order;
    if (mlkp_order >= 2) c.rank_per_order[2] = mlkp_rank2;
    if (mlkp_order >= 3) c.rank_per_order[3] = mlkp_rank3;
    c.location_weight_enabled = location_weight;
    c.location_hidden_channels = location_hidden;
    return c;
  }

  ProposalSpec proposalSpec() const {
    ProposalSpec p;
    p.rois_per_image = rois_per_image;
    p.positive_fraction = positive_fraction;
    p.seed = train_seed;
    return p;
  }

  static RunConfig parse(const std::string& text);
  static RunConfig parseFile(const std::string& path);
  std::string serialize() const;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::string formatDouble(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct KeyBinding {
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

template <typename T>
T parseNumber(const std::string& key, const std::string& value) {
  std::istringstream iss(value);
  T v{};
  iss >> v;
  MLKP_CHECK(!iss.fail() && iss.eof(),
             "config key '" << key << "': cannot parse '" << value << "'");
  return v;
}

inline bool parseBool(const std::string& key, const std::string& value) {
  if (value == "true") return true;
  if (value == "false") return false;
  MLKP_CHECK(false, "config key '" << key << "': expected true/false, got '"
                                   << value << "'");
  return false;
}

}  // namespace detail

namespace config_detail {

// One binding table drives parsing, serialization and unknown-key errors.
inline std::map<std::string, detail::KeyBinding> bindings(RunConfig& c) {
  using detail::KeyBinding;
  using detail::parseBool;
  using detail::parseNumber;
  std::map<std::string, KeyBinding> m;

  auto num = [&m](const std::string& key, auto& field) {
    using T = std::decay_t<decltype(field)>;
    m[key] = KeyBinding{[key, &field](const std::string& v) {
                          field = parseNumber<T>(key, v);
                        },
                        [&field]() { return std::to_string(field); }};
  };
  auto dbl = [&m](const std::string& key, double& field) {
    m[key] = KeyBinding{[key, &field](const std::string& v) {
                          field = parseNumber<double>(key, v);
                        },
                        [&field]() { return detail::formatDouble(field); }};
  };
  auto boolean = [&m](const std::string& key, bool& field) {
    m[key] = KeyBinding{[key, &field](const std::string& v) {
                          field = parseBool(key, v);
                        },
                        [&field]() { return field ? "true" : "false"; }};
  };
  auto str = [&m](const std::string& key, std::string& field) {
    m[key] = KeyBinding{[&field](const std::string& v) { field = v; },
                        [&field]() { return field; }};
  };

  m["model.backbone_channels"] = KeyBinding{
      [&c](const std::string& v) {
        std::vector<Index> widths;
        std::istringstream iss(v);
        std::string part;
        while (std::getline(iss, part, ','))
          widths.push_back(parseNumber<Index>("model.backbone_channels",
                                              detail::trim(part)));
        MLKP_CHECK(!widths.empty(), "model.backbone_channels: empty list");
        c.backbone_channels = std::move(widths);
      },
      [&c]() {
        std::string out;
        for (size_t i = 0; i < c.backbone_channels.size(); ++i) {
          if (i) out += ",";
          out += std::to_string(c.backbone_channels[i]);
        }
        return out;
      }};
  num("model.fusion_width", c.fusion_width);
  num("model.mlkp_order", c.mlkp_order);
  num("model.mlkp_rank2", c.mlkp_rank2);
  num("model.mlkp_rank3", c.mlkp_rank3);
  boolean("model.location_weight", c.location_weight);
  num("model.location_hidden", c.location_hidden);
  num("model.pool_size", c.pool_size);
  num("model.classes", c.classes);

  num("train.iterations", c.iterations);
  dbl("train.base_lr", c.base_lr);
  num("train.lr_decay_step", c.lr_decay_step);
  dbl("train.lr_decay_factor", c.lr_decay_factor);
  dbl("train.momentum", c.momentum);
  dbl("train.weight_decay", c.weight_decay);
  num("train.seed", c.train_seed);
  num("train.rois_per_image", c.rois_per_image);
  dbl("train.positive_fraction", c.positive_fraction);
  num("train.eval_every", c.eval_every);

  num("data.image_size", c.image_size);
  num("data.classes", c.data_classes);
  num("data.min_objects", c.min_objects);
  num("data.max_objects", c.max_objects);
  dbl("data.min_size", c.min_size);
  dbl("data.max_size", c.max_size);
  dbl("data.noise", c.noise);
  num("data.seed", c.data_seed);
  num("data.train_scenes", c.train_scenes);
  num("data.eval_scenes", c.eval_scenes);

  str("paths.weights_in", c.weights_in);
  str("paths.weights_out", c.weights_out);
  str("paths.report_out", c.report_out);
  return m;
}

}  // namespace config_detail

inline RunConfig RunConfig::parse(const std::string& text) {
  RunConfig c;
  auto table = config_detail::bindings(c);
  std::istringstream iss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(iss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    MLKP_CHECK(eq != std::string::npos,
               "config line " << lineno << ": expected `section.key = value`");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    auto it = table.find(key);
    MLKP_CHECK(it != table.end(), "unknown config key '" << key << "'");
    it->second.set(value);
  }
  return c;
}

inline RunConfig RunConfig::parseFile(const std::string& path) {
  std::ifstream f(path);
  MLKP_IO_CHECK(f.good(), "cannot open config file '" << path << "'");
  std::ostringstream oss;
  oss << f.rdbuf();
  return parse(oss.str());
}

inline std::string RunConfig::serialize() const {
  auto& self = const_cast<RunConfig&>(*this);
  auto table = config_detail::bindings(self);
  std::ostringstream oss;
  for (const auto& [key, binding] : table)
    oss << key << " = " << binding.get() << "\n";
  return oss.str();
}

}  // namespace mlkp

#endif  // MLKP_CONFIG_HPP
