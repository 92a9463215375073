#include "trlab/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "trlab/data.hpp"
#include "trlab/init.hpp"
#include "trlab/nn/optim.hpp"
#include "trlab/nn/train.hpp"
#include "trlab/rng.hpp"
#include "trlab/zoo.hpp"

namespace trlab {

namespace {

struct KeyDef {
  const char* key;
  const char* fallback;
  const char* doc;
  bool fingerprinted;
};

const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> table = {
      {"label", "", "free-form run name used in reports", false},
      {"out", "runs", "output directory; results land in <out>/<fingerprint>/", false},
      {"seed", "", "master seed for initialization and training (required)", true},
      {"graph.variant", "TinyDesk", "LargeT | LargeW | Small | Tiny | SmallDesk | TinyDesk", true},
      {"graph.slim_from", "", "first conv layer to slim (empty = no slimming)", true},
      {"graph.slim_factor", "0.5", "channel multiplier for slimmed layers, in (0, 1]", true},
      {"init.scheme", "random", "random | meanvar | sample | shuffle | gabor-conv1 | transfuse | freeze", true},
      {"init.donor", "", "donor checkpoint (TNSR) for donor-based schemes", true},
      {"init.boundary", "none", "last transferred/frozen layer (inclusive), or none", true},
      {"init.rest", "random", "initialization of layers after the boundary when transfusing", true},
      {"init.bn", "bn-identity", "bn-identity | bn-meanvar | bn-transfer", true},
      {"init.bn_stats", "copy", "copy | reset: moving statistics of transferred layers", true},
      {"init.freeze_variant", "prefix-random", "full-pretrained | prefix-random | random-baseline", true},
      {"init.gabor_angles", "16", "Gabor orientations", true},
      {"init.gabor_sigmas", "2", "Gabor envelope widths (comma list)", true},
      {"init.gabor_freqs", "0.08,0.16,0.25,0.32", "Gabor frequencies (comma list)", true},
      {"data.path", "", "load this dataset file instead of generating one", true},
      {"data.kind", "local-dots", "local-dots | global-shape", true},
      {"data.n", "6000", "generated examples before splitting", true},
      {"data.size", "64", "image height and width", true},
      {"data.classes", "5", "label width", true},
      {"data.seed", "1", "generator, split and subset seed", true},
      {"data.test_fraction", "0.1666666666666667", "group-wise test share", true},
      {"data.subset", "0", "train on about this many examples (0 = all)", true},
      {"data.dots_per_class", "2", "local-dots: dots per grade step", true},
      {"data.dot_radius", "1.0", "local-dots: dot radius in pixels", true},
      {"data.noise", "0.16", "per-pixel Gaussian noise std", true},
      {"data.group_size", "4", "examples per group", true},
      {"train.optimizer", "adam", "adam | sgd", true},
      {"train.lr", "0.001", "base learning rate", true},
      {"train.batch", "8", "minibatch size", true},
      {"train.steps", "2000", "maximum train steps", true},
      {"train.momentum", "0.9", "SGD momentum coefficient", true},
      {"train.schedule", "constant", "constant | warmup_step", true},
      {"train.warmup_epochs", "0", "warmup length for warmup_step", true},
      {"train.decay_epochs", "", "epochs at which lr is divided by decay_factor (comma list)", true},
      {"train.decay_factor", "10", "decay divisor", true},
      {"train.hflip", "false", "random horizontal flips", true},
      {"train.vflip", "false", "random vertical flips", true},
      {"train.stop_at_threshold", "false", "stop once the threshold metric is reached", true},
      {"eval.every", "100", "evaluation cadence in steps", true},
      {"eval.max", "0", "evaluate on at most this many test examples (0 = all)", true},
      {"threshold.metric", "mean", "mean | class:<k>", true},
      {"threshold.value", "0.85", "AUC threshold for steps-to-threshold", true},
  };
  return table;
}

const KeyDef* find_key(const std::string& key) {
  for (const auto& k : key_table())
    if (k.key == key) return &k;
  return nullptr;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

bool parse_double(const std::string& s, double& out) {
  try {
    std::size_t pos = 0;
    out = std::stod(s, &pos);
    return pos == s.size();
  } catch (const std::exception&) {
    return false;
  }
}

bool parse_u64(const std::string& s, std::uint64_t& out) {
  if (s.empty() || s[0] == '-' || s[0] == '+') return false;
  try {
    std::size_t pos = 0;
    out = std::stoull(s, &pos);
    return pos == s.size();
  } catch (const std::exception&) {
    return false;
  }
}

bool parse_bool(const std::string& s, bool& out) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return out = true, true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return out = false, true;
  return false;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  for (const auto& k : key_table()) values_[k.key] = k.fallback;
}

const std::vector<std::pair<std::string, std::string>>& ExperimentConfig::key_docs() {
  static const auto docs = [] {
    std::vector<std::pair<std::string, std::string>> d;
    for (const auto& k : key_table())
      d.emplace_back(k.key, std::string(k.doc) + (k.fallback[0] ? " [default " + std::string(k.fallback) + "]" : ""));
    return d;
  }();
  return docs;
}

ExperimentConfig ExperimentConfig::parse(const std::string& text, const std::string& origin) {
  ExperimentConfig c;
  std::vector<std::string> problems;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      problems.push_back(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
      continue;
    }
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (!find_key(key)) {
      problems.push_back(origin + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
      continue;
    }
    c.values_[key] = value;
  }
  if (!problems.empty()) throw ConfigError(problems);
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError({"cannot read config " + path.string()});
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str(), path.string());
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  if (!find_key(key)) throw ConfigError({"unknown key '" + key + "'"});
  values_[key] = trim(value);
}

void ExperimentConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError({"expected key=value, got '" + assignment + "'"});
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

const std::string& ExperimentConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError({"unknown key '" + key + "'"});
  return it->second;
}

double ExperimentConfig::get_double(const std::string& key) const {
  double v;
  if (!parse_double(get(key), v)) throw ConfigError({key + ": expected a number, got '" + get(key) + "'"});
  return v;
}

std::uint64_t ExperimentConfig::get_u64(const std::string& key) const {
  std::uint64_t v;
  if (!parse_u64(get(key), v)) throw ConfigError({key + ": expected a non-negative integer, got '" + get(key) + "'"});
  return v;
}

std::size_t ExperimentConfig::get_size(const std::string& key) const { return static_cast<std::size_t>(get_u64(key)); }

bool ExperimentConfig::get_bool(const std::string& key) const {
  bool v;
  if (!parse_bool(get(key), v)) throw ConfigError({key + ": expected true or false, got '" + get(key) + "'"});
  return v;
}

std::vector<std::string> ExperimentConfig::get_list(const std::string& key) const { return split_list(get(key)); }

std::vector<double> ExperimentConfig::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& s : get_list(key)) {
    double v;
    if (!parse_double(s, v)) throw ConfigError({key + ": '" + s + "' is not a number"});
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> ExperimentConfig::problems() const {
  std::vector<std::string> p;
  auto num = [&](const char* key, double lo, double hi, bool lo_open, bool hi_open) {
    double v;
    if (!parse_double(get(key), v)) {
      p.push_back(std::string(key) + ": expected a number, got '" + get(key) + "'");
      return;
    }
    const bool lo_ok = lo_open ? v > lo : v >= lo;
    const bool hi_ok = hi_open ? v < hi : v <= hi;
    if (!lo_ok || !hi_ok)
      p.push_back(std::string(key) + ": " + get(key) + " outside " + (lo_open ? "(" : "[") + std::to_string(lo) +
                  ", " + std::to_string(hi) + (hi_open ? ")" : "]"));
  };
  auto count = [&](const char* key, std::uint64_t min) {
    std::uint64_t v;
    if (!parse_u64(get(key), v))
      p.push_back(std::string(key) + ": expected a non-negative integer, got '" + get(key) + "'");
    else if (v < min)
      p.push_back(std::string(key) + ": must be at least " + std::to_string(min));
  };
  auto boolean = [&](const char* key) {
    bool b;
    if (!parse_bool(get(key), b)) p.push_back(std::string(key) + ": expected true or false, got '" + get(key) + "'");
  };
  auto parses = [&](const char* key, auto&& fn) {
    try {
      fn(get(key));
    } catch (const Error& e) {
      p.push_back(std::string(key) + ": " + e.what());
    }
  };

  std::uint64_t seed;
  if (get("seed").empty())
    p.push_back("seed: required (no hidden entropy)");
  else if (!parse_u64(get("seed"), seed))
    p.push_back("seed: expected a non-negative integer, got '" + get("seed") + "'");

  parses("graph.variant", [](const std::string& s) { parse_cbr_variant(s); });
  num("graph.slim_factor", 0, 1, true, false);

  const std::string scheme = get("init.scheme");
  const bool donor_scheme = scheme == "meanvar" || scheme == "sample" || scheme == "shuffle" || scheme == "transfuse" ||
                            (scheme == "freeze" && get("init.freeze_variant") != "random-baseline");
  if (!is_known_scheme(scheme) && scheme != "transfuse" && scheme != "freeze")
    p.push_back("init.scheme: unknown scheme '" + scheme + "'");
  parses("init.bn", [](const std::string& s) { parse_bn_variant(s); });
  const bool bn_donor = get("init.bn") == "bn-meanvar" || get("init.bn") == "bn-transfer";
  if ((donor_scheme || bn_donor) && get("init.donor").empty())
    p.push_back("init.donor: required by init.scheme=" + scheme + " / init.bn=" + get("init.bn"));
  if (!get("init.donor").empty() && !std::filesystem::exists(get("init.donor")))
    p.push_back("init.donor: file not found: " + get("init.donor"));
  if ((scheme == "transfuse" || scheme == "freeze") && get("init.boundary").empty())
    p.push_back("init.boundary: required by init.scheme=" + scheme);
  const std::string rest = get("init.rest");
  if (rest != "random" && rest != "meanvar" && rest != "sample" && rest != "shuffle")
    p.push_back("init.rest: expected random, meanvar, sample or shuffle, got '" + rest + "'");
  if (get("init.bn_stats") != "copy" && get("init.bn_stats") != "reset")
    p.push_back("init.bn_stats: expected copy or reset, got '" + get("init.bn_stats") + "'");
  const std::string fv = get("init.freeze_variant");
  if (fv != "full-pretrained" && fv != "prefix-random" && fv != "random-baseline")
    p.push_back("init.freeze_variant: expected full-pretrained, prefix-random or random-baseline, got '" + fv + "'");
  count("init.gabor_angles", 1);
  for (const char* key : {"init.gabor_sigmas", "init.gabor_freqs"}) {
    const auto items = split_list(get(key));
    if (items.empty()) p.push_back(std::string(key) + ": empty list");
    for (const auto& s : items) {
      double v;
      if (!parse_double(s, v) || !(v > 0)) p.push_back(std::string(key) + ": '" + s + "' is not a positive number");
    }
  }

  if (!get("data.path").empty() && !std::filesystem::exists(get("data.path")))
    p.push_back("data.path: file not found: " + get("data.path"));
  parses("data.kind", [](const std::string& s) { parse_synth_kind(s); });
  count("data.n", 2);
  count("data.size", 16);
  count("data.classes", 1);
  count("data.seed", 0);
  num("data.test_fraction", 0, 1, true, true);
  count("data.subset", 0);
  count("data.dots_per_class", 0);
  num("data.dot_radius", 0, 1e9, true, false);
  num("data.noise", 0, 1e9, false, false);
  count("data.group_size", 1);

  parses("train.optimizer", [](const std::string& s) { nn::parse_optimizer(s); });
  num("train.lr", 0, 1e9, true, false);
  count("train.batch", 2);
  count("train.steps", 0);
  num("train.momentum", 0, 1, false, true);
  parses("train.schedule", [](const std::string& s) { nn::parse_schedule(s); });
  num("train.warmup_epochs", 0, 1e9, false, false);
  for (const auto& s : split_list(get("train.decay_epochs"))) {
    double v;
    if (!parse_double(s, v) || v < 0) p.push_back("train.decay_epochs: '" + s + "' is not a non-negative number");
  }
  num("train.decay_factor", 0, 1e9, true, false);
  boolean("train.hflip");
  boolean("train.vflip");
  boolean("train.stop_at_threshold");
  count("eval.every", 0);
  count("eval.max", 0);
  parses("threshold.metric", [](const std::string& s) { nn::AucMetric::parse(s); });
  num("threshold.value", 0, 1, false, false);
  return p;
}

void ExperimentConfig::validate() const {
  auto p = problems();
  if (!p.empty()) throw ConfigError(p);
}

std::string ExperimentConfig::canonical() const {
  std::string out;
  for (const auto& [k, v] : values_) {
    const KeyDef* def = find_key(k);
    if (!def || !def->fingerprinted) continue;
    if ((k == "init.donor" || k == "data.path") && !v.empty())
      out += k + " = digest:" + (std::filesystem::exists(v) ? file_digest(v) : "missing") + "\n";
    else
      out += k + " = " + v + "\n";
  }
  return out;
}

std::string ExperimentConfig::text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot read " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::vector<char> buf(1 << 16);
  while (f) {
    f.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const auto got = static_cast<std::size_t>(f.gcount());
    if (got) h = fnv1a64(std::string_view(buf.data(), got), h);
  }
  return hex64(h);
}

std::string ExperimentConfig::fingerprint() const {
  return hex64(fnv1a64(canonical() + "generator_version = " + kGeneratorVersion + "\n"));
}

}  // namespace trlab
