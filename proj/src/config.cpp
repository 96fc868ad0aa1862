// SPDX-License-Identifier: Apache-2.0
#include "sapd/config.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace sapd {
namespace {

enum class Kind { integer, real, boolean, text, mode, int_list, real_list, switch_list, mode_list };

struct KeySpec {
  std::string_view key;
  Kind kind;
  std::string_view fallback;
};

// Defaults follow the published hyperparameters where they exist
// (epsilon 0.2, z 4.0, eta 1.0, k 3, lambda 0.1, 0.05 / 0.5 / 1000 at inference).
constexpr KeySpec kKeys[] = {
    {"seed", Kind::integer, "0"},
    {"data.seed", Kind::integer, "1"},
    {"data.image_size", Kind::integer, "64"},
    {"data.num_classes", Kind::integer, "3"},
    {"data.train_count", Kind::integer, "2000"},
    {"data.test_count", Kind::integer, "200"},
    {"data.min_size", Kind::real, "20"},
    {"data.max_size", Kind::real, "48"},
    {"data.max_instances", Kind::integer, "8"},
    {"data.noise", Kind::real, "0.08"},
    {"pyramid.min_level", Kind::integer, "2"},
    {"pyramid.max_level", Kind::integer, "5"},
    {"anchor.epsilon", Kind::real, "0.2"},
    {"anchor.z", Kind::real, "4.0"},
    {"weighting.enabled", Kind::boolean, "true"},
    {"weighting.eta", Kind::real, "1.0"},
    {"weighting.mode", Kind::mode, "both"},
    {"selection.enabled", Kind::boolean, "true"},
    {"selection.top_k", Kind::integer, "3"},
    {"selection.lambda", Kind::real, "0.1"},
    {"selection.roi_size", Kind::integer, "7"},
    {"selection.sampling_ratio", Kind::integer, "2"},
    {"selection.width", Kind::integer, "32"},
    {"selection.couple_features", Kind::boolean, "false"},
    {"focal.alpha", Kind::real, "0.25"},
    {"focal.gamma", Kind::real, "2.0"},
    {"model.stem_width", Kind::integer, "16"},
    {"model.width", Kind::integer, "32"},
    {"model.head_convs", Kind::integer, "2"},
    {"init.sigma", Kind::real, "0.01"},
    {"init.prior", Kind::real, "0.01"},
    {"init.loc_bias", Kind::real, "0.1"},
    {"train.epochs", Kind::integer, "8"},
    {"train.batch_size", Kind::integer, "8"},
    {"train.lr", Kind::real, "0.03"},
    {"train.momentum", Kind::real, "0.9"},
    {"train.weight_decay", Kind::real, "0.0001"},
    {"train.phase_switch_epoch", Kind::integer, "4"},
    {"train.lr_drops", Kind::real_list, "0.75,0.9167"},
    {"train.lr_gamma", Kind::real, "0.1"},
    {"train.warmup_iters", Kind::integer, "100"},
    {"train.flip", Kind::boolean, "true"},
    {"train.divergence_factor", Kind::real, "1000"},
    {"infer.score_threshold", Kind::real, "0.05"},
    {"infer.top_n", Kind::integer, "1000"},
    {"infer.nms_threshold", Kind::real, "0.5"},
    {"dump.max_images", Kind::integer, "16"},
    {"ablate.sw", Kind::switch_list, "on,off"},
    {"ablate.ss", Kind::switch_list, "on,off"},
    {"ablate.eta", Kind::real_list, "0.1,0.5,1,2"},
    {"ablate.k", Kind::int_list, "1,2,3,4"},
    {"ablate.mode", Kind::mode_list, "both,cls_only,loc_only,off"},
    {"ablate.seeds", Kind::int_list, "0"},
};

const KeySpec* find_key(std::string_view key) {
  for (const KeySpec& k : kKeys) {
    if (k.key == key) return &k;
  }
  return nullptr;
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto end = comma == std::string_view::npos ? text.size() : comma;
    out.push_back(trim(text.substr(start, end - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

bool parse_integer(std::string_view s, long long& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && !s.empty();
}

bool parse_real(std::string_view s, double& out) {
  if (s.empty()) return false;
  const std::string copy(s);
  char* end = nullptr;
  errno = 0;
  out = std::strtod(copy.c_str(), &end);
  return errno == 0 && end == copy.c_str() + copy.size();
}

bool parse_boolean(std::string_view s, bool& out) {
  if (s == "true" || s == "on" || s == "1") return out = true, true;
  if (s == "false" || s == "off" || s == "0") return out = false, true;
  return false;
}

bool is_mode(std::string_view s) {
  return s == "both" || s == "cls_only" || s == "loc_only" || s == "off";
}

bool well_formed(Kind kind, std::string_view value) {
  long long i;
  double d;
  bool b;
  switch (kind) {
    case Kind::integer: return parse_integer(value, i);
    case Kind::real: return parse_real(value, d);
    case Kind::boolean: return parse_boolean(value, b);
    case Kind::text: return true;
    case Kind::mode: return is_mode(value);
    case Kind::int_list:
    case Kind::real_list:
    case Kind::switch_list:
    case Kind::mode_list: {
      if (trim(value).empty()) return kind == Kind::real_list;
      for (const std::string& item : split_list(value)) {
        if (kind == Kind::int_list && !parse_integer(item, i)) return false;
        if (kind == Kind::real_list && !parse_real(item, d)) return false;
        if (kind == Kind::switch_list && !parse_boolean(item, b)) return false;
        if (kind == Kind::mode_list && !is_mode(item)) return false;
      }
      return true;
    }
  }
  return false;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

RunConfig::RunConfig() {
  for (const KeySpec& k : kKeys) values_.emplace(std::string(k.key), std::string(k.fallback));
}

RunConfig RunConfig::parse(std::string_view text) {
  RunConfig config;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string content = trim(line);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    config.set(trim(std::string_view(content).substr(0, eq)),
               trim(std::string_view(content).substr(eq + 1)));
  }
  return config;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

void RunConfig::set(std::string_view key, std::string_view value) {
  const KeySpec* spec = find_key(key);
  if (spec == nullptr) throw ConfigError("unknown config key '" + std::string(key) + "'");
  const std::string v = trim(value);
  if (!well_formed(spec->kind, v)) {
    throw ConfigError("malformed value '" + v + "' for config key '" + std::string(key) + "'");
  }
  values_.find(key)->second = v;
}

void RunConfig::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
  }
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

const std::string& RunConfig::get(std::string_view key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  return it->second;
}

long long RunConfig::get_int(std::string_view key) const {
  long long v = 0;
  parse_integer(get(key), v);
  return v;
}

double RunConfig::get_double(std::string_view key) const {
  double v = 0.0;
  parse_real(get(key), v);
  return v;
}

bool RunConfig::get_bool(std::string_view key) const {
  bool v = false;
  parse_boolean(get(key), v);
  return v;
}

std::vector<std::string> RunConfig::get_list(std::string_view key) const {
  const std::string& raw = get(key);
  if (trim(raw).empty()) return {};
  return split_list(raw);
}

std::string RunConfig::serialize() const {
  std::string out;
  for (const auto& [key, value] : values_) out += key + " = " + value + "\n";
  return out;
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  out << serialize();
  if (!out) throw ConfigError("cannot write config file " + path.string());
}

std::vector<std::string> RunConfig::known_keys() {
  std::vector<std::string> keys;
  for (const KeySpec& k : kKeys) keys.emplace_back(k.key);
  std::sort(keys.begin(), keys.end());
  return keys;
}

Settings resolve(const RunConfig& c) {
  Settings s;
  s.seed = static_cast<std::uint64_t>(c.get_int("seed"));

  const auto image_size = static_cast<int>(c.get_int("data.image_size"));
  s.pyramid = {static_cast<int>(c.get_int("pyramid.min_level")),
               static_cast<int>(c.get_int("pyramid.max_level")), image_size, image_size};
  try {
    s.pyramid.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const int levels = s.pyramid.num_levels();

  s.z = static_cast<float>(c.get_double("anchor.z"));
  require(s.z > 0.0f, "anchor.z must be positive");
  s.weighting.epsilon = static_cast<float>(c.get_double("anchor.epsilon"));
  s.weighting.eta = static_cast<float>(c.get_double("weighting.eta"));
  s.weighting.mode = parse_weight_mode(c.get("weighting.mode"));
  s.weighting.centerness = c.get_bool("weighting.enabled");
  try {
    s.weighting.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  s.selection_enabled = c.get_bool("selection.enabled");
  s.selection.top_k = static_cast<int>(c.get_int("selection.top_k"));
  s.selection.lambda = static_cast<float>(c.get_double("selection.lambda"));
  s.selection.roi_size = static_cast<int>(c.get_int("selection.roi_size"));
  s.selection.sampling_ratio = static_cast<int>(c.get_int("selection.sampling_ratio"));
  s.selection.width = static_cast<int>(c.get_int("selection.width"));
  s.selection.couple_features = c.get_bool("selection.couple_features");
  try {
    s.selection.validate(levels);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  s.focal.alpha = static_cast<float>(c.get_double("focal.alpha"));
  s.focal.gamma = static_cast<float>(c.get_double("focal.gamma"));
  require(s.focal.alpha > 0.0f && s.focal.alpha < 1.0f, "focal.alpha must lie in (0, 1)");
  require(s.focal.gamma >= 0.0f, "focal.gamma must be >= 0");

  require(c.get_int("data.seed") >= 0, "data.seed must be >= 0");
  s.data.seed = static_cast<std::uint64_t>(c.get_int("data.seed"));
  s.data.num_classes = static_cast<int>(c.get_int("data.num_classes"));
  s.data.train_count = static_cast<int>(c.get_int("data.train_count"));
  s.data.test_count = static_cast<int>(c.get_int("data.test_count"));
  s.data.min_size = static_cast<float>(c.get_double("data.min_size"));
  s.data.max_size = static_cast<float>(c.get_double("data.max_size"));
  s.data.max_instances = static_cast<int>(c.get_int("data.max_instances"));
  s.data.noise = static_cast<float>(c.get_double("data.noise"));
  require(s.data.num_classes >= 1 && s.data.num_classes <= 3,
          "data.num_classes must lie in [1, 3] (rectangle, ellipse, triangle)");
  require(s.data.train_count >= 1 && s.data.test_count >= 1, "data counts must be >= 1");
  require(s.data.min_size >= 2.0f && s.data.min_size <= s.data.max_size &&
              s.data.max_size <= static_cast<float>(image_size),
          "need 2 <= data.min_size <= data.max_size <= data.image_size");
  require(s.data.max_instances >= 1 && s.data.max_instances <= 8,
          "data.max_instances must lie in [1, 8]");
  require(s.data.noise >= 0.0f, "data.noise must be >= 0");

  s.model.stem_width = static_cast<int>(c.get_int("model.stem_width"));
  s.model.width = static_cast<int>(c.get_int("model.width"));
  s.model.head_convs = static_cast<int>(c.get_int("model.head_convs"));
  s.model.init_sigma = static_cast<float>(c.get_double("init.sigma"));
  s.model.prior = static_cast<float>(c.get_double("init.prior"));
  s.model.loc_bias = static_cast<float>(c.get_double("init.loc_bias"));
  require(s.model.stem_width >= 1 && s.model.width >= 1, "model widths must be >= 1");
  require(s.model.head_convs >= 0, "model.head_convs must be >= 0");
  require(s.model.init_sigma > 0.0f, "init.sigma must be positive");
  require(s.model.prior > 0.0f && s.model.prior < 1.0f, "init.prior must lie in (0, 1)");

  s.train.epochs = static_cast<int>(c.get_int("train.epochs"));
  s.train.batch_size = static_cast<int>(c.get_int("train.batch_size"));
  s.train.learning_rate = static_cast<float>(c.get_double("train.lr"));
  s.train.sgd.momentum = static_cast<float>(c.get_double("train.momentum"));
  s.train.sgd.weight_decay = static_cast<float>(c.get_double("train.weight_decay"));
  s.train.phase_switch_epoch = static_cast<int>(c.get_int("train.phase_switch_epoch"));
  s.train.lr_drops.clear();
  for (const std::string& v : c.get_list("train.lr_drops")) s.train.lr_drops.push_back(std::stod(v));
  s.train.lr_gamma = static_cast<float>(c.get_double("train.lr_gamma"));
  s.train.warmup_iters = static_cast<int>(c.get_int("train.warmup_iters"));
  s.train.flip = c.get_bool("train.flip");
  s.train.divergence_factor = c.get_double("train.divergence_factor");
  require(s.train.epochs >= 1 && s.train.batch_size >= 1, "train.epochs and batch_size must be >= 1");
  require(s.train.learning_rate >= 0.0f, "train.lr must be >= 0");
  require(s.train.phase_switch_epoch >= 0 && s.train.phase_switch_epoch <= s.train.epochs,
          "train.phase_switch_epoch must lie in [0, train.epochs]");
  for (double d : s.train.lr_drops) require(d > 0.0 && d < 1.0, "train.lr_drops must lie in (0, 1)");
  require(s.train.warmup_iters >= 0, "train.warmup_iters must be >= 0");
  require(s.train.divergence_factor > 1.0, "train.divergence_factor must exceed 1");

  s.infer.score_threshold = static_cast<float>(c.get_double("infer.score_threshold"));
  s.infer.top_n = static_cast<int>(c.get_int("infer.top_n"));
  s.infer.nms_threshold = static_cast<float>(c.get_double("infer.nms_threshold"));
  require(s.infer.top_n >= 1, "infer.top_n must be >= 1");
  s.dump_max_images = static_cast<int>(c.get_int("dump.max_images"));

  for (const std::string& v : c.get_list("ablate.sw")) s.ablation.soft_weighting.push_back(v == "on" || v == "true" || v == "1");
  for (const std::string& v : c.get_list("ablate.ss")) s.ablation.soft_selection.push_back(v == "on" || v == "true" || v == "1");
  for (const std::string& v : c.get_list("ablate.eta")) {
    s.ablation.eta.push_back(std::stof(v));
    require(s.ablation.eta.back() >= 0.0f, "ablate.eta entries must be >= 0");
  }
  for (const std::string& v : c.get_list("ablate.k")) {
    const int k = std::stoi(v);
    require(k >= 1 && k <= levels, "ablate.k entries must lie in [1, number of levels]");
    s.ablation.top_k.push_back(k);
  }
  for (const std::string& v : c.get_list("ablate.mode")) s.ablation.mode.push_back(parse_weight_mode(v));
  for (const std::string& v : c.get_list("ablate.seeds")) {
    require(std::stoll(v) >= 0, "ablate.seeds entries must be >= 0");
    s.ablation.seeds.push_back(std::stoull(v));
  }
  return s;
}

}  // namespace sapd
