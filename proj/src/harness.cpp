#include "trlab/harness.hpp"

#include <atomic>
#include <chrono>
#include <exception>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "trlab/rng.hpp"

namespace trlab {

using nlohmann::json;

std::optional<std::size_t> boundary_index(const ModelGraph& graph, const std::string& boundary) {
  if (boundary.empty() || boundary == "none") return std::nullopt;
  return graph.require_index(boundary);
}

namespace {

bool in_prefix(const ModelGraph& graph, const std::string& layer, std::optional<std::size_t> L) {
  return L && graph.require_index(layer) <= *L;
}

void reset_stats(WeightStore& w, const ModelGraph& graph, std::optional<std::size_t> L) {
  for (auto& e : w.entries()) {
    if (!in_prefix(graph, e.layer, L)) continue;
    if (e.role == Role::moving_mean) e.value.fill(0.0f);
    if (e.role == Role::moving_var) e.value.fill(1.0f);
  }
}

}  // namespace

WeightStore transfuse(const WeightStore& donor, const ModelGraph& graph, const std::string& boundary,
                      const std::string& remainder_scheme, std::uint64_t seed, BnStats bn_stats) {
  const auto L = boundary_index(graph, boundary);
  WeightStore out;
  if (remainder_scheme == "random") {
    out = random_init(graph, seed);
  } else {
    if (!is_known_scheme(remainder_scheme))
      throw InvalidArgument("unknown remainder scheme '" + remainder_scheme + "'");
    if (donor.fingerprint() != graph.fingerprint())
      throw InvalidArgument("remainder scheme '" + remainder_scheme + "' needs a donor of the same graph");
    out = init_scheme(remainder_scheme, graph, &donor, seed);
  }
  for (auto& e : out.entries()) {
    if (!in_prefix(graph, e.layer, L)) continue;
    const auto* src = donor.find(e.name);
    if (!src) throw ShapeError("donor has no tensor '" + e.name + "' at or before boundary " + boundary);
    if (src->value.shape() != e.value.shape())
      throw ShapeError("donor tensor '" + e.name + "' " + shape_str(src->value.shape()) + " does not match " +
                       shape_str(e.value.shape()));
    e.value = src->value;
  }
  if (bn_stats == BnStats::reset) reset_stats(out, graph, L);
  return out;
}

FreezeVariant parse_freeze_variant(const std::string& name) {
  if (name == "full-pretrained" || name == "full_pretrained") return FreezeVariant::full_pretrained;
  if (name == "prefix-random" || name == "prefix_pretrained_rest_random") return FreezeVariant::prefix_pretrained_rest_random;
  if (name == "random-baseline" || name == "random_baseline") return FreezeVariant::random_baseline;
  throw InvalidArgument("unknown freeze variant '" + name + "'");
}

const char* freeze_variant_name(FreezeVariant v) {
  switch (v) {
    case FreezeVariant::full_pretrained: return "full-pretrained";
    case FreezeVariant::prefix_pretrained_rest_random: return "prefix-random";
    case FreezeVariant::random_baseline: return "random-baseline";
  }
  return "?";
}

FrozenInit apply_freeze(const FreezePlan& plan, const WeightStore* donor, const ModelGraph& graph, BnStats bn_stats) {
  const auto L = boundary_index(graph, plan.boundary);
  FrozenInit out;
  switch (plan.variant) {
    case FreezeVariant::full_pretrained:
      if (!donor) throw InvalidArgument("freeze variant full-pretrained requires a donor");
      check_store_matches(*donor, graph);
      out.weights = *donor;
      if (bn_stats == BnStats::reset) reset_stats(out.weights, graph, L);
      break;
    case FreezeVariant::prefix_pretrained_rest_random:
      if (!donor) throw InvalidArgument("freeze variant prefix-random requires a donor");
      out.weights = transfuse(*donor, graph, plan.boundary, "random", plan.seed, bn_stats);
      break;
    case FreezeVariant::random_baseline:
      out.weights = random_init(graph, plan.seed);
      break;
  }
  for (const auto& e : out.weights.entries()) out.mask[e.name] = !in_prefix(graph, e.layer, L);
  return out;
}

std::optional<std::size_t> steps_to_threshold(const nn::TrainingLog& log, const nn::AucMetric& metric,
                                              double threshold) {
  if (log.entries.empty()) throw InvalidArgument("steps_to_threshold on an empty log");
  for (const auto& e : log.entries) {
    const auto v = log.metric(e, metric);
    if (v && *v >= threshold) return e.step;
  }
  return std::nullopt;
}

ModelGraph config_graph(const ExperimentConfig& config) {
  const std::size_t size = config.get_size("data.size");
  ModelGraph g = build_cbr(parse_cbr_variant(config.get("graph.variant")), {size, size, 3},
                           config.get_size("data.classes"));
  if (config.has_value("graph.slim_from")) g = slim(g, config.get("graph.slim_from"), config.get_double("graph.slim_factor"));
  return g;
}

nn::TrainConfig config_train(const ExperimentConfig& config, std::size_t train_size) {
  nn::TrainConfig t;
  t.optimizer.kind = nn::parse_optimizer(config.get("train.optimizer"));
  t.optimizer.momentum = config.get_double("train.momentum");
  t.schedule.kind = nn::parse_schedule(config.get("train.schedule"));
  t.schedule.base_lr = config.get_double("train.lr");
  t.schedule.warmup_epochs = config.get_double("train.warmup_epochs");
  t.schedule.decay_epochs = config.get_double_list("train.decay_epochs");
  t.schedule.decay_factor = config.get_double("train.decay_factor");
  t.batch = config.get_size("train.batch");
  t.schedule.steps_per_epoch = std::max<std::size_t>(1, train_size / t.batch);
  t.steps = config.get_size("train.steps");
  t.seed = config.get_u64("seed");
  t.hflip = config.get_bool("train.hflip");
  t.vflip = config.get_bool("train.vflip");
  t.eval_every = config.get_size("eval.every");
  t.eval_max = config.get_size("eval.max");
  if (config.get_bool("train.stop_at_threshold"))
    t.stop = nn::StopRule{nn::AucMetric::parse(config.get("threshold.metric")), config.get_double("threshold.value")};
  return t;
}

namespace {

std::string data_key(const ExperimentConfig& c) {
  std::string s;
  for (const char* k : {"data.kind", "data.n", "data.size", "data.classes", "data.seed", "data.dots_per_class",
                        "data.dot_radius", "data.noise", "data.group_size"})
    s += std::string(k) + "=" + c.get(k) + "\n";
  s += std::string("generator_version=") + kGeneratorVersion + "\n";
  return hex64(fnv1a64(s));
}

std::mutex& data_mutex() {
  static std::mutex m;
  return m;
}

std::map<std::string, std::shared_ptr<const DatasetBundle>>& data_memo() {
  static std::map<std::string, std::shared_ptr<const DatasetBundle>> m;
  return m;
}

std::shared_ptr<const DatasetBundle> generated_dataset(const ExperimentConfig& c) {
  const std::string key = data_key(c);
  std::lock_guard<std::mutex> lock(data_mutex());
  auto& memo = data_memo();
  if (auto it = memo.find(key); it != memo.end()) return it->second;
  const std::filesystem::path dir = std::filesystem::path(c.get("out")) / "data";
  const std::filesystem::path file = dir / (key + ".tnsr");
  std::shared_ptr<const DatasetBundle> bundle;
  if (std::filesystem::exists(file)) {
    bundle = std::make_shared<const DatasetBundle>(load_dataset(file));
  } else {
    SynthTaskConfig sc;
    sc.kind = parse_synth_kind(c.get("data.kind"));
    sc.n = c.get_size("data.n");
    sc.image_size = c.get_size("data.size");
    sc.num_classes = c.get_size("data.classes");
    sc.seed = c.get_u64("data.seed");
    sc.dots_per_class = c.get_size("data.dots_per_class");
    sc.dot_radius = c.get_double("data.dot_radius");
    sc.noise_level = c.get_double("data.noise");
    sc.group_size = c.get_size("data.group_size");
    auto b = std::make_shared<DatasetBundle>(synth_dataset(sc));
    std::filesystem::create_directories(dir);
    const auto tmp = file.string() + ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
    save_dataset(tmp, *b);
    std::filesystem::rename(tmp, file);
    bundle = b;
  }
  if (memo.size() >= 2) memo.erase(memo.begin());
  memo[key] = bundle;
  return bundle;
}

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error("cannot write " + p.string());
  f << s;
  if (!f) throw Error("failed writing " + p.string());
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw Error("cannot read " + p.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

template <typename Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(std::string(name) + ": " + e.what());
  }
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

Split config_data(const ExperimentConfig& config) {
  Split split;
  const std::uint64_t dseed = config.get_u64("data.seed");
  if (config.has_value("data.path")) {
    split = split_by_group(load_dataset(config.get("data.path")), config.get_double("data.test_fraction"), dseed);
  } else {
    split = split_by_group(*generated_dataset(config), config.get_double("data.test_fraction"), dseed);
  }
  const std::size_t n = config.get_size("data.subset");
  if (n > 0 && n < split.train.size()) split.train = subset(split.train, n, dseed);
  return split;
}

ExperimentResult load_result(const std::filesystem::path& dir) {
  const auto rfile = dir / "result.json";
  if (!std::filesystem::exists(rfile)) throw Error("no result.json in " + dir.string());
  const json j = json::parse(read_text(rfile));
  ExperimentResult r;
  r.fingerprint = j.at("fingerprint").get<std::string>();
  r.dir = dir;
  r.log = nn::TrainingLog::read_csv(dir / "log.csv");
  r.log.config_fingerprint = r.fingerprint;
  for (const auto& v : j.at("final_auc")) r.final_auc.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
  if (!j.at("final_mean_auc").is_null()) r.final_mean_auc = j.at("final_mean_auc").get<double>();
  if (!j.at("steps_to_threshold").is_null()) r.steps_to_threshold = j.at("steps_to_threshold").get<std::size_t>();
  r.steps_run = j.at("steps_run").get<std::size_t>();
  r.checkpoint = dir / j.at("checkpoint").get<std::string>();
  r.cached = true;
  return r;
}

ExperimentResult run_experiment(const ExperimentConfig& config, bool force, const nn::ProgressFn& progress) {
  config.validate();
  const std::string fp = config.fingerprint();
  const std::filesystem::path dir = std::filesystem::path(config.get("out")) / fp;
  if (!force && std::filesystem::exists(dir / "result.json")) return load_result(dir);

  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t seed = config.get_u64("seed");
  const std::string scheme = config.get("init.scheme");
  const BnStats bn_stats = config.get("init.bn_stats") == "reset" ? BnStats::reset : BnStats::copy;

  const ModelGraph graph = stage("graph", [&] { return config_graph(config); });
  std::optional<WeightStore> donor;
  if (config.has_value("init.donor"))
    donor = stage("donor", [&] { return load_checkpoint(config.get("init.donor")); });
  const Split data = stage("data", [&] { return config_data(config); });

  std::optional<FreezeMask> mask;
  WeightStore init = stage("init", [&] {
    const BnVariant bn = parse_bn_variant(config.get("init.bn"));
    if (scheme == "transfuse") {
      if (config.has_value("graph.slim_from") && config.get_double("graph.slim_factor") < 1.0) {
        const auto b = boundary_index(graph, config.get("init.boundary"));
        const auto s = graph.require_index(config.get("graph.slim_from"));
        if (b && s <= *b)
          throw InvalidArgument("graph.slim_from (" + config.get("graph.slim_from") +
                                ") must come after init.boundary (" + config.get("init.boundary") + ")");
      }
      return transfuse(*donor, graph, config.get("init.boundary"), config.get("init.rest"), seed, bn_stats);
    }
    if (scheme == "freeze") {
      FreezePlan plan{parse_freeze_variant(config.get("init.freeze_variant")), config.get("init.boundary"), seed};
      auto fz = apply_freeze(plan, donor ? &*donor : nullptr, graph, bn_stats);
      mask = std::move(fz.mask);
      return std::move(fz.weights);
    }
    GaborConfig gc;
    gc.n_angles = config.get_size("init.gabor_angles");
    gc.sigmas = config.get_double_list("init.gabor_sigmas");
    gc.freqs = config.get_double_list("init.gabor_freqs");
    return init_scheme(scheme, graph, donor ? &*donor : nullptr, seed, bn, gc);
  });

  const nn::TrainConfig tc = config_train(config, data.train.size());
  nn::TrainResult trained = stage("train", [&] {
    return nn::train(graph, init, data.train, data.test, tc, mask ? &*mask : nullptr, progress);
  });
  trained.log.config_fingerprint = fp;

  return stage("persist", [&] {
    std::filesystem::create_directories(dir);
    const Metadata meta_common{{"seed", std::to_string(seed)},
                               {"optimizer", nn::optimizer_name(tc.optimizer.kind)},
                               {"config_fingerprint", fp}};
    Metadata mi = meta_common, mf = meta_common;
    mi["global_step"] = "0";
    mf["global_step"] = std::to_string(trained.steps_run);
    save_checkpoint(dir / "init.tnsr", init, graph, mi);
    save_checkpoint(dir / "final.tnsr", trained.weights, graph, mf);
    trained.log.write_csv(dir / "log.csv");
    write_text(dir / "config", config.text());

    const nn::AucMetric metric = nn::AucMetric::parse(config.get("threshold.metric"));
    const double threshold = config.get_double("threshold.value");
    ExperimentResult r;
    r.fingerprint = fp;
    r.dir = dir;
    r.log = trained.log;
    r.final_auc = trained.log.entries.back().auc;
    r.final_mean_auc = mean_auc(r.final_auc);
    r.steps_to_threshold = steps_to_threshold(trained.log, metric, threshold);
    r.steps_run = trained.steps_run;
    r.checkpoint = dir / "final.tnsr";

    json manifest;
    manifest["fingerprint"] = fp;
    manifest["config"] = config.values();
    manifest["graph"] = graph.serialize();
    manifest["graph_fingerprint"] = graph.fingerprint();
    manifest["variant_tag"] = graph.variant_tag;
    manifest["param_count"] = param_count(graph);
    manifest["generator_version"] = kGeneratorVersion;
    manifest["train_examples"] = data.train.size();
    manifest["test_examples"] = data.test.size();
    manifest["init_digest"] = weights_digest(init);
    if (donor) manifest["donor_digest"] = weights_digest(*donor);
    if (mask) manifest["freeze_mask"] = *mask;
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");

    json res;
    res["fingerprint"] = fp;
    res["label"] = config.get("label");
    res["steps_run"] = r.steps_run;
    res["steps_to_threshold"] = r.steps_to_threshold ? json(*r.steps_to_threshold) : json(nullptr);
    res["threshold"] = {{"metric", metric.str()}, {"value", threshold}};
    json aucs = json::array();
    for (const auto& a : r.final_auc) aucs.push_back(opt_json(a));
    res["final_auc"] = aucs;
    res["final_mean_auc"] = opt_json(r.final_mean_auc);
    res["checkpoint"] = "final.tnsr";
    res["init_checkpoint"] = "init.tnsr";
    res["seconds_total"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    double sps = 0;
    for (const auto& e : trained.log.entries) sps = std::max(sps, e.seconds_per_step);
    res["max_seconds_per_step"] = sps;
    write_text(dir / "result.json", res.dump(2) + "\n");
    return r;
  });
}

ExperimentResult slim_hybrid(const ExperimentConfig& config, bool force) {
  if (config.get("init.scheme") != "transfuse") throw ConfigError({"slim_hybrid: init.scheme must be transfuse"});
  if (!config.has_value("graph.slim_from")) throw ConfigError({"slim_hybrid: graph.slim_from is required"});
  return run_experiment(config, force);
}

std::vector<ExperimentResult> run_sweep(const std::vector<ExperimentConfig>& configs, std::size_t jobs, bool force) {
  for (const auto& c : configs) c.validate();
  std::vector<ExperimentResult> results(configs.size());
  std::vector<std::exception_ptr> errors(configs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < configs.size();) {
      try {
        results[i] = run_experiment(configs[i], force);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, configs.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

RunReport report_runs(const std::vector<std::filesystem::path>& dirs) {
  if (dirs.empty()) throw InvalidArgument("report needs at least one experiment directory");
  RunReport rep;
  rep.curves_csv = "run,step,loss,auc_mean,lr\n";
  rep.summary_csv = "run,steps_to_threshold,metric,threshold\n";
  auto fmt = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const auto& dir : dirs) {
    if (!std::filesystem::exists(dir / "log.csv")) throw Error("missing log.csv in " + dir.string());
    const ExperimentResult r = load_result(dir);
    const ExperimentConfig c = ExperimentConfig::load(dir / "config");
    const std::string run = c.has_value("label") ? c.get("label") : r.fingerprint;
    for (const auto& e : r.log.entries) {
      const auto m = mean_auc(e.auc);
      rep.curves_csv += run + "," + std::to_string(e.step) + "," + fmt(e.loss) + "," + (m ? fmt(*m) : "") + "," +
                        fmt(e.lr) + "\n";
      ++rep.curve_rows;
    }
    const nn::AucMetric metric = nn::AucMetric::parse(c.get("threshold.metric"));
    const double thr = c.get_double("threshold.value");
    const auto s = steps_to_threshold(r.log, metric, thr);
    rep.summary_csv += run + "," + (s ? std::to_string(*s) : "absent") + "," + metric.str() + "," + fmt(thr) + "\n";
  }
  return rep;
}

}  // namespace trlab
