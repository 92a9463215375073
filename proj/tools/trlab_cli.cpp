#include <cmath>
#include <cstring>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "trlab/cca.hpp"
#include "trlab/config.hpp"
#include "trlab/data.hpp"
#include "trlab/filters.hpp"
#include "trlab/harness.hpp"
#include "trlab/init.hpp"
#include "trlab/nn/train.hpp"
#include "trlab/weights.hpp"
#include "trlab/zoo.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace trlab;

namespace {

enum Exit { kOk = 0, kValidation = 1, kRuntime = 2 };

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string opt_str(const std::optional<double>& v) { return v ? fmt(*v) : "absent"; }

void write_manifest(const fs::path& out, const std::string& command, const json& params,
                    const std::vector<std::string>& argv) {
  fs::create_directories(out);
  json m;
  m["command"] = command;
  m["parameters"] = params;
  m["argv"] = argv;
  std::ofstream(out / "manifest.json") << m.dump(2) << "\n";
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

/// Options shared by every experiment-driving subcommand.
std::string config_key_help() {
  std::string text = "Config keys (for --config, --set and --sweep):\n";
  for (const auto& [key, doc] : ExperimentConfig::key_docs()) {
    std::string line = "  " + key;
    line.resize(std::max<std::size_t>(line.size() + 1, 28), ' ');
    text += line + doc + "\n";
  }
  return text;
}

struct ExperimentArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::vector<std::string> sweeps;
  std::size_t jobs = 1;
  bool force = false;
  std::string seed;
  std::string out;
  std::string label;
  std::map<std::string, std::string> flags;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "Experiment config file")->check(CLI::ExistingFile);
    app->add_option("--set", sets, "Override a config key (key=value), repeatable");
    app->add_option("--sweep", sweeps, "Sweep a key over values (key=v1,v2,...), repeatable; cartesian product");
    app->add_option("--jobs", jobs, "Worker threads for sweeps")->check(CLI::PositiveNumber);
    app->add_flag("--force", force, "Re-run even when a stored result exists");
    app->add_option("--seed", seed, "Run seed (required unless the config sets it)");
    app->add_option("--out", out, "Output root directory");
    app->add_option("--label", label, "Run name used in reports");
    app->footer(config_key_help);
  }

  void flag(CLI::App* app, const std::string& name, const std::string& key, const std::string& help) {
    app->add_option(name, flags[key], help);
  }
};

ExperimentConfig base_config(const ExperimentArgs& a) {
  ExperimentConfig c = a.config_path.empty() ? ExperimentConfig() : ExperimentConfig::load(a.config_path);
  for (const auto& [k, v] : a.flags)
    if (!v.empty()) c.set(k, v);
  if (!a.seed.empty()) c.set("seed", a.seed);
  if (!a.out.empty()) c.set("out", a.out);
  if (!a.label.empty()) c.set("label", a.label);
  for (const auto& s : a.sets) c.set_assignment(s);
  return c;
}

std::vector<ExperimentConfig> expand_sweeps(const ExperimentConfig& base, const std::vector<std::string>& sweeps) {
  std::vector<ExperimentConfig> out{base};
  for (const auto& s : sweeps) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError({"--sweep expects key=v1,v2,...: '" + s + "'"});
    const std::string key = s.substr(0, eq);
    std::vector<ExperimentConfig> next;
    for (const auto& c : out)
      for (const auto& v : split_list(s.substr(eq + 1))) {
        ExperimentConfig d = c;
        d.set(key, v);
        d.set("label", (c.has_value("label") ? c.get("label") + "/" : "") + key + "=" + v);
        next.push_back(std::move(d));
      }
    out = std::move(next);
  }
  std::vector<std::string> problems;
  for (const auto& c : out)
    for (const auto& p : c.problems()) problems.push_back((c.has_value("label") ? c.get("label") + ": " : "") + p);
  if (!problems.empty()) throw ConfigError(problems);
  return out;
}

int run_experiments(const ExperimentArgs& a, ExperimentConfig base, bool slim_mode) {
  const auto configs = expand_sweeps(base, a.sweeps);
  std::vector<ExperimentResult> results;
  if (configs.size() == 1) {
    results.push_back(slim_mode ? slim_hybrid(configs[0], a.force)
                                : run_experiment(configs[0], a.force, [](const nn::LogEntry& e) {
                                    std::fprintf(stderr, "step %zu loss %.5f\n", e.step, e.loss);
                                  }));
  } else {
    if (slim_mode)
      for (const auto& c : configs)
        if (!c.has_value("graph.slim_from")) throw ConfigError({"slim: graph.slim_from is required"});
    results = run_sweep(configs, a.jobs, a.force);
  }
  std::printf("run,dir,cached,steps_run,steps_to_threshold,final_mean_auc\n");
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    const std::string name = configs[i].has_value("label") ? configs[i].get("label") : r.fingerprint;
    std::printf("%s,%s,%d,%zu,%s,%s\n", name.c_str(), r.dir.string().c_str(), r.cached ? 1 : 0, r.steps_run,
                r.steps_to_threshold ? std::to_string(*r.steps_to_threshold).c_str() : "absent",
                opt_str(r.final_mean_auc).c_str());
  }
  return kOk;
}

ModelGraph graph_from_flags(const std::string& variant, std::size_t size, std::size_t classes,
                            const std::string& slim_from, double factor) {
  ModelGraph g = build_cbr(parse_cbr_variant(variant), {size, size, 3}, classes);
  if (!slim_from.empty()) g = slim(g, slim_from, factor);
  return g;
}

std::string stem(const std::string& path) { return fs::path(path).stem().string(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weight transfusion and representation analysis lab"};
  app.require_subcommand(1);
  std::vector<std::string> args(argv, argv + argc);

  // synth-data
  auto* synth = app.add_subcommand("synth-data", "Generate a synthetic dataset");
  SynthTaskConfig sc;
  std::string synth_kind, synth_out, synth_name = "dataset.tnsr";
  std::uint64_t synth_seed = 0;
  synth->add_option("--kind", synth_kind, "local-dots | global-shape")->required();
  synth->add_option("--seed", synth_seed, "Generator seed")->required();
  synth->add_option("--n", sc.n, "Number of examples");
  synth->add_option("--size", sc.image_size, "Image side length");
  synth->add_option("--classes", sc.num_classes, "Number of label columns");
  synth->add_option("--dots-per-class", sc.dots_per_class);
  synth->add_option("--dot-radius", sc.dot_radius);
  synth->add_option("--noise", sc.noise_level);
  synth->add_option("--group-size", sc.group_size);
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--name", synth_name, "Dataset file name inside --out");

  // experiment commands
  auto* train = app.add_subcommand("train", "Initialize and train one experiment (or a sweep)");
  ExperimentArgs train_a;
  train_a.attach(train);
  train_a.flag(train, "--scheme", "init.scheme", "random | meanvar | sample | shuffle | gabor-conv1");
  train_a.flag(train, "--donor", "init.donor", "Donor checkpoint");
  train_a.flag(train, "--bn", "init.bn", "bn-identity | bn-meanvar | bn-transfer");
  train_a.flag(train, "--graph", "graph.variant", "CBR variant");
  train_a.flag(train, "--data", "data.path", "Dataset file (otherwise generated from data.* keys)");
  train_a.flag(train, "--steps", "train.steps", "Training steps");

  auto* transfuse_cmd = app.add_subcommand("transfuse", "Train from a donor prefix plus a re-initialized suffix");
  ExperimentArgs tr_a;
  std::string boundaries = "conv1";
  tr_a.attach(transfuse_cmd);
  transfuse_cmd->add_option("--boundary", boundaries, "Last transfused layer, or a comma list to sweep ('none' allowed)");
  tr_a.flag(transfuse_cmd, "--donor", "init.donor", "Donor checkpoint");
  tr_a.flag(transfuse_cmd, "--rest", "init.rest", "Scheme for layers after the boundary");
  tr_a.flag(transfuse_cmd, "--bn-stats", "init.bn_stats", "copy | reset");
  tr_a.flag(transfuse_cmd, "--graph", "graph.variant", "CBR variant");
  tr_a.flag(transfuse_cmd, "--data", "data.path", "Dataset file");
  tr_a.flag(transfuse_cmd, "--steps", "train.steps", "Training steps");

  auto* freeze = app.add_subcommand("freeze", "Train with a frozen prefix");
  ExperimentArgs fr_a;
  fr_a.attach(freeze);
  fr_a.flag(freeze, "--variant", "init.freeze_variant", "full-pretrained | prefix-random | random-baseline");
  fr_a.flag(freeze, "--L", "init.boundary", "Last frozen layer");
  fr_a.flag(freeze, "--donor", "init.donor", "Donor checkpoint");
  fr_a.flag(freeze, "--graph", "graph.variant", "CBR variant");
  fr_a.flag(freeze, "--data", "data.path", "Dataset file");
  fr_a.flag(freeze, "--steps", "train.steps", "Training steps");

  auto* slim_cmd = app.add_subcommand("slim", "Donor prefix plus a slimmed random suffix");
  ExperimentArgs sl_a;
  sl_a.attach(slim_cmd);
  sl_a.flag(slim_cmd, "--donor", "init.donor", "Donor checkpoint");
  sl_a.flag(slim_cmd, "--boundary", "init.boundary", "Last transfused layer");
  sl_a.flag(slim_cmd, "--slim-from", "graph.slim_from", "First slimmed layer");
  sl_a.flag(slim_cmd, "--factor", "graph.slim_factor", "Width factor");
  sl_a.flag(slim_cmd, "--graph", "graph.variant", "CBR variant");
  sl_a.flag(slim_cmd, "--data", "data.path", "Dataset file");
  sl_a.flag(slim_cmd, "--steps", "train.steps", "Training steps");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string eval_ckpt, eval_data, eval_out, eval_config;
  std::vector<std::string> eval_sets;
  std::size_t eval_limit = 0, eval_batch = 64;
  eval->add_option("--checkpoint", eval_ckpt)->required()->check(CLI::ExistingFile);
  eval->add_option("--data", eval_data, "Dataset file; otherwise the test split of --config/--set")
      ->check(CLI::ExistingFile);
  eval->add_option("--config", eval_config)->check(CLI::ExistingFile);
  eval->add_option("--set", eval_sets);
  eval->add_option("--limit", eval_limit, "Evaluate only the first N examples");
  eval->add_option("--batch", eval_batch)->check(CLI::PositiveNumber);
  eval->add_option("--out", eval_out, "Output directory")->required();

  // init
  auto* init = app.add_subcommand("init", "Write an initialized checkpoint");
  std::string init_scheme_name = "random", init_graph = "TinyDesk", init_donor, init_bn = "bn-identity", init_out,
              init_slim_from, init_name = "init.tnsr";
  std::size_t init_size = 64, init_classes = 5;
  double init_factor = 0.5;
  std::uint64_t init_seed = 0;
  GaborConfig init_gabor;
  init->add_option("--scheme", init_scheme_name);
  init->add_option("--graph", init_graph);
  init->add_option("--size", init_size);
  init->add_option("--classes", init_classes);
  init->add_option("--slim-from", init_slim_from);
  init->add_option("--factor", init_factor);
  init->add_option("--donor", init_donor)->check(CLI::ExistingFile);
  init->add_option("--bn", init_bn);
  init->add_option("--gabor-angles", init_gabor.n_angles);
  init->add_option("--seed", init_seed)->required();
  init->add_option("--out", init_out, "Output directory")->required();
  init->add_option("--name", init_name);

  // gabor
  auto* gabor = app.add_subcommand("gabor", "Write the Gabor filter bank and its montage");
  GaborConfig gcfg;
  std::string gabor_out;
  gabor->add_option("--angles", gcfg.n_angles);
  gabor->add_option("--sigmas", gcfg.sigmas)->delimiter(',');
  gabor->add_option("--freqs", gcfg.freqs)->delimiter(',');
  gabor->add_option("--out", gabor_out, "Output directory")->required();

  // cca
  auto* cca_cmd = app.add_subcommand("cca", "Per-layer CCA similarity between checkpoint pairs");
  std::vector<std::string> cca_a, cca_b, cca_layers;
  std::string cca_data, cca_out;
  CcaSamplingConfig ccfg;
  std::uint64_t cca_seed = 0;
  std::size_t cca_batch = 64, cca_limit = 0;
  cca_cmd->add_option("--a", cca_a, "First checkpoint of each pair, repeatable")->required()->check(CLI::ExistingFile);
  cca_cmd->add_option("--b", cca_b, "Second checkpoint of each pair, repeatable")->required()->check(CLI::ExistingFile);
  cca_cmd->add_option("--layers", cca_layers, "Layers to compare (default: every conv layer)")->delimiter(',');
  cca_cmd->add_option("--data", cca_data, "Dataset file supplying the inputs")->required()->check(CLI::ExistingFile);
  cca_cmd->add_option("--limit", cca_limit, "Use only the first N examples");
  cca_cmd->add_option("--p", ccfg.p, "Activation vectors per matrix");
  cca_cmd->add_option("--d", ccfg.d, "Neurons sampled per layer");
  cca_cmd->add_option("--reps", ccfg.reps);
  cca_cmd->add_option("--threshold", ccfg.variance_threshold, "SVCCA variance fraction (>= 1 keeps everything)");
  cca_cmd->add_option("--epsilon", ccfg.epsilon);
  cca_cmd->add_option("--batch", cca_batch)->check(CLI::PositiveNumber);
  cca_cmd->add_option("--seed", cca_seed)->required();
  cca_cmd->add_option("--out", cca_out, "Output directory")->required();

  // export-filters
  auto* exp = app.add_subcommand("export-filters", "Write conv filters as PGM images");
  std::string exp_ckpt, exp_layer = "conv1", exp_out;
  exp->add_option("--checkpoint", exp_ckpt)->required()->check(CLI::ExistingFile);
  exp->add_option("--layer", exp_layer);
  exp->add_option("--out", exp_out, "Output directory")->required();

  // report
  auto* report = app.add_subcommand("report", "Merge experiment logs into curve and summary CSVs");
  std::vector<std::string> report_dirs;
  std::string report_out;
  report->add_option("dirs", report_dirs, "Experiment directories")->required()->check(CLI::ExistingDirectory);
  report->add_option("--out", report_out, "Output directory")->required();

  // inspect
  auto* inspect = app.add_subcommand("inspect", "Describe a checkpoint, optionally comparing it with another");
  std::string insp_ckpt, insp_compare, insp_upto;
  inspect->add_option("checkpoint", insp_ckpt)->required()->check(CLI::ExistingFile);
  inspect->add_option("--compare", insp_compare, "Second checkpoint")->check(CLI::ExistingFile);
  inspect->add_option("--upto", insp_upto, "Only compare layers up to and including this one");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kValidation;
  }

  try {
    if (*synth) {
      sc.kind = parse_synth_kind(synth_kind);
      sc.seed = synth_seed;
      const DatasetBundle b = synth_dataset(sc);
      fs::create_directories(synth_out);
      const fs::path file = fs::path(synth_out) / synth_name;
      save_dataset(file, b);
      write_manifest(synth_out, "synth-data",
                     {{"kind", synth_kind_name(sc.kind)},
                      {"n", sc.n},
                      {"size", sc.image_size},
                      {"classes", sc.num_classes},
                      {"dots_per_class", sc.dots_per_class},
                      {"dot_radius", sc.dot_radius},
                      {"noise", sc.noise_level},
                      {"group_size", sc.group_size},
                      {"seed", sc.seed},
                      {"file", synth_name},
                      {"digest", file_digest(file)}},
                     args);
      std::printf("%s\n", file.string().c_str());
      return kOk;
    }
    if (*train) return run_experiments(train_a, base_config(train_a), false);
    if (*transfuse_cmd) {
      ExperimentConfig c = base_config(tr_a);
      c.set("init.scheme", "transfuse");
      auto bs = split_list(boundaries);
      if (bs.size() == 1) {
        c.set("init.boundary", bs[0]);
      } else {
        tr_a.sweeps.insert(tr_a.sweeps.begin(), "init.boundary=" + boundaries);
      }
      return run_experiments(tr_a, c, false);
    }
    if (*freeze) {
      ExperimentConfig c = base_config(fr_a);
      c.set("init.scheme", "freeze");
      return run_experiments(fr_a, c, false);
    }
    if (*slim_cmd) {
      ExperimentConfig c = base_config(sl_a);
      c.set("init.scheme", "transfuse");
      return run_experiments(sl_a, c, true);
    }
    if (*eval) {
      const auto [graph, weights] = load_model(eval_ckpt);
      DatasetBundle data;
      json params{{"checkpoint", eval_ckpt}, {"checkpoint_digest", file_digest(eval_ckpt)}, {"limit", eval_limit}};
      if (!eval_data.empty()) {
        data = load_dataset(eval_data);
        params["data"] = eval_data;
        params["data_digest"] = file_digest(eval_data);
      } else {
        ExperimentConfig c = eval_config.empty() ? ExperimentConfig() : ExperimentConfig::load(eval_config);
        for (const auto& s : eval_sets) c.set_assignment(s);
        data = config_data(c).test;
        params["config"] = c.values();
      }
      const nn::EvalResult r = nn::evaluate(graph, weights, data, eval_batch, eval_limit);
      json auc = json::array();
      for (const auto& a : r.auc) auc.push_back(a ? json(*a) : json(nullptr));
      json res{{"auc", auc},
               {"mean_auc", r.mean_auc ? json(*r.mean_auc) : json(nullptr)},
               {"mean_loss", r.mean_loss},
               {"examples", r.scores.dim(0)}};
      write_manifest(eval_out, "eval", params, args);
      std::ofstream(fs::path(eval_out) / "eval.json") << res.dump(2) << "\n";
      std::printf("mean_auc,%s\nmean_loss,%s\n", opt_str(r.mean_auc).c_str(), fmt(r.mean_loss).c_str());
      for (std::size_t k = 0; k < r.auc.size(); ++k) std::printf("auc_%zu,%s\n", k, opt_str(r.auc[k]).c_str());
      return kOk;
    }
    if (*init) {
      const ModelGraph graph = graph_from_flags(init_graph, init_size, init_classes, init_slim_from, init_factor);
      std::optional<WeightStore> donor;
      if (!init_donor.empty()) donor = load_checkpoint(init_donor);
      if (!is_known_scheme(init_scheme_name))
        throw ConfigError({"unknown init scheme '" + init_scheme_name + "'"});
      const WeightStore w =
          init_scheme(init_scheme_name, graph, donor ? &*donor : nullptr, init_seed, parse_bn_variant(init_bn), init_gabor);
      const fs::path file = fs::path(init_out) / init_name;
      fs::create_directories(init_out);
      save_checkpoint(file, w, graph, {{"seed", std::to_string(init_seed)}, {"scheme", init_scheme_name}});
      json params{{"scheme", init_scheme_name}, {"graph", graph.serialize()}, {"variant", init_graph},
                  {"bn", init_bn},            {"seed", init_seed},          {"file", init_name},
                  {"gabor_angles", init_gabor.n_angles}};
      if (donor) params["donor"] = init_donor, params["donor_digest"] = file_digest(init_donor);
      write_manifest(init_out, "init", params, args);
      std::printf("%s\n", file.string().c_str());
      return kOk;
    }
    if (*gabor) {
      const TensorD bank = gabor_bank(gcfg);
      const std::size_t n = bank.dim(0), k = bank.dim(1);
      TensorF kernel({k, k, 1, n});
      for (std::size_t o = 0; o < n; ++o)
        for (std::size_t y = 0; y < k; ++y)
          for (std::size_t x = 0; x < k; ++x) kernel.at(y, x, 0, o) = static_cast<float>(bank[(o * k + y) * k + x]);
      fs::create_directories(gabor_out);
      Container c;
      c.tensors.emplace_back("bank", bank);
      c.metadata["layout"] = "filter,y,x";
      save_container(fs::path(gabor_out) / "gabor_bank.tnsr", c);
      write_pgm(fs::path(gabor_out) / "gabor_montage.pgm", filter_montage(kernel));
      write_manifest(gabor_out, "gabor", {{"angles", gcfg.n_angles}, {"sigmas", gcfg.sigmas}, {"freqs", gcfg.freqs}},
                     args);
      std::printf("%zu filters of %zux%zu\n", n, k, k);
      return kOk;
    }
    if (*cca_cmd) {
      if (cca_a.size() != cca_b.size()) throw ConfigError({"--a and --b must be given the same number of times"});
      ccfg.validate();
      std::vector<StorePair> pairs;
      for (std::size_t i = 0; i < cca_a.size(); ++i) {
        auto [ga, wa] = load_model(cca_a[i]);
        auto [gb, wb] = load_model(cca_b[i]);
        if (ga.input != gb.input) throw InvalidArgument("checkpoints " + cca_a[i] + " and " + cca_b[i] +
                                                        " take different input shapes");
        pairs.push_back({stem(cca_a[i]) + "~" + stem(cca_b[i]), std::move(ga), std::move(wa), std::move(gb),
                         std::move(wb)});
      }
      if (cca_layers.empty()) cca_layers = pairs[0].graph_a.conv_layer_names();
      DatasetBundle data = load_dataset(cca_data);
      if (cca_limit > 0 && cca_limit < data.size()) {
        std::vector<std::size_t> idx(cca_limit);
        for (std::size_t i = 0; i < cca_limit; ++i) idx[i] = i;
        data = data.select(idx);
      }
      const auto rows = similarity_report(pairs, cca_layers, data, ccfg, cca_seed);
      const std::string csv = similarity_csv(rows);
      fs::create_directories(cca_out);
      std::ofstream(fs::path(cca_out) / "cca.csv") << csv;
      json ck = json::array();
      for (std::size_t i = 0; i < cca_a.size(); ++i)
        ck.push_back({{"a", cca_a[i]}, {"a_digest", file_digest(cca_a[i])}, {"b", cca_b[i]}, {"b_digest", file_digest(cca_b[i])}});
      write_manifest(cca_out, "cca",
                     json{{"pairs", ck}, {"layers", cca_layers}, {"data", cca_data}, {"data_digest", file_digest(cca_data)},
                      {"limit", cca_limit}, {"p", ccfg.p}, {"d", ccfg.d}, {"reps", ccfg.reps},
                      {"threshold", ccfg.variance_threshold}, {"epsilon", ccfg.epsilon}, {"seed", cca_seed}},
                     args);
      std::fputs(csv.c_str(), stdout);
      return kOk;
    }
    if (*exp) {
      const WeightStore w = load_checkpoint(exp_ckpt);
      const FilterExport ex = export_filters(w, exp_layer, exp_out);
      write_manifest(exp_out, "export-filters",
                     {{"checkpoint", exp_ckpt}, {"checkpoint_digest", file_digest(exp_ckpt)}, {"layer", exp_layer}},
                     args);
      std::printf("%zu filters, montage %s\n", ex.files.size(), ex.montage.string().c_str());
      return kOk;
    }
    if (*report) {
      std::vector<fs::path> dirs(report_dirs.begin(), report_dirs.end());
      const RunReport rep = report_runs(dirs);
      fs::create_directories(report_out);
      std::ofstream(fs::path(report_out) / "curves.csv") << rep.curves_csv;
      std::ofstream(fs::path(report_out) / "summary.csv") << rep.summary_csv;
      write_manifest(report_out, "report", {{"dirs", report_dirs}}, args);
      std::fputs(rep.summary_csv.c_str(), stdout);
      return kOk;
    }
    if (*inspect) {
      Metadata meta;
      const WeightStore w = load_checkpoint(insp_ckpt, &meta);
      for (const auto& [k, v] : meta) std::printf("meta %s = %s\n", k.c_str(), v.c_str());
      std::printf("digest %s\n", weights_digest(w).c_str());
      for (const auto& e : w.entries()) {
        double s = 0, s2 = 0;
        const auto& d = e.value.data();
        for (float v : d) s += v, s2 += static_cast<double>(v) * v;
        const double n = static_cast<double>(d.size()), mean = s / n;
        std::printf("tensor %s %s mean %.6g std %.6g\n", e.name.c_str(), shape_str(e.value.shape()).c_str(), mean,
                    std::sqrt(std::max(0.0, s2 / n - mean * mean)));
      }
      if (!insp_compare.empty()) {
        Metadata mb;
        const WeightStore b = load_checkpoint(insp_compare, &mb);
        std::optional<std::size_t> upto;
        std::optional<ModelGraph> g;
        if (!insp_upto.empty()) {
          g = graph_from_metadata(meta);
          upto = g->require_index(insp_upto);
        }
        std::size_t equal = 0, differ = 0;
        for (const auto& e : w.entries()) {
          if (upto && g->require_index(e.layer) > *upto) continue;
          const auto* o = b.find(e.name);
          const bool same = o && o->value.shape() == e.value.shape() &&
                            std::memcmp(o->value.raw(), e.value.raw(), e.value.size() * sizeof(float)) == 0;
          std::printf("compare %s %s\n", e.name.c_str(), same ? "bit-equal" : "differs");
          (same ? equal : differ)++;
        }
        std::printf("compare summary: %zu bit-equal, %zu differ\n", equal, differ);
      }
      return kOk;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error:\n");
    for (const auto& p : e.problems()) std::fprintf(stderr, "  %s\n", p.c_str());
    return kValidation;
  } catch (const InvalidArgument& e) {
    std::fprintf(stderr, "invalid argument: %s\n", e.what());
    return kValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntime;
  }
  return kOk;
}
