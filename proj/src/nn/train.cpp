#include "trlab/nn/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "trlab/rng.hpp"

namespace trlab::nn {

AucMetric AucMetric::parse(const std::string& text) {
  if (text == "mean" || text == "auc_mean") return {};
  for (const char* prefix : {"class:", "auc_"}) {
    const std::string p(prefix);
    if (text.rfind(p, 0) == 0 && text.size() > p.size()) {
      std::size_t pos = 0;
      const std::string rest = text.substr(p.size());
      unsigned long k = 0;
      try {
        k = std::stoul(rest, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos == rest.size()) return AucMetric{static_cast<std::size_t>(k)};
    }
  }
  throw InvalidArgument("unknown AUC metric '" + text + "' (expected mean or class:<k>)");
}

std::string AucMetric::str() const {
  return class_index ? "class:" + std::to_string(*class_index) : "mean";
}

std::optional<double> TrainingLog::metric(const LogEntry& e, const AucMetric& m) const {
  if (!m.class_index) return mean_auc(e.auc);
  if (*m.class_index >= e.auc.size())
    throw InvalidArgument("unknown class " + std::to_string(*m.class_index) + " (log has " +
                          std::to_string(e.auc.size()) + " classes)");
  return e.auc[*m.class_index];
}

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::string TrainingLog::csv() const {
  std::size_t classes = entries.empty() ? 0 : entries.front().auc.size();
  std::string out = "step,loss";
  for (std::size_t c = 0; c < classes; ++c) out += ",auc_" + std::to_string(c);
  out += ",lr\n";
  for (const auto& e : entries) {
    out += std::to_string(e.step) + "," + fmt17(e.loss);
    for (std::size_t c = 0; c < classes; ++c) {
      out += ",";
      if (c < e.auc.size() && e.auc[c]) out += fmt17(*e.auc[c]);
    }
    out += "," + fmt17(e.lr) + "\n";
  }
  return out;
}

void TrainingLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << csv();
  if (!f) throw Error("failed writing " + path.string());
}

TrainingLog TrainingLog::read_csv(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("missing log " + path.string());
  std::string line;
  if (!std::getline(f, line)) throw Error("empty log " + path.string());
  const auto header = split_csv(line);
  if (header.size() < 3 || header.front() != "step" || header[1] != "loss" || header.back() != "lr")
    throw Error("malformed log header in " + path.string());
  const std::size_t classes = header.size() - 3;
  TrainingLog log;
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size())
      throw Error(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                  " cells");
    LogEntry e;
    e.step = std::stoull(cells[0]);
    e.loss = std::stod(cells[1]);
    for (std::size_t c = 0; c < classes; ++c) {
      const auto& s = cells[2 + c];
      e.auc.push_back(s.empty() ? std::nullopt : std::optional<double>(std::stod(s)));
    }
    e.lr = std::stod(cells.back());
    if (!log.entries.empty() && e.step <= log.entries.back().step)
      throw Error(path.string() + ":" + std::to_string(lineno) + ": steps not increasing");
    log.entries.push_back(std::move(e));
  }
  return log;
}

TensorF make_batch(const DatasetBundle& data, std::span<const std::size_t> indices) {
  const auto& img = data.images;
  const std::size_t h = img.dim(1), w = img.dim(2), c = img.dim(3);
  const std::size_t per = h * w * c;
  TensorF out({indices.size(), h, w, c});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const float* src = img.raw() + indices[b] * per;
    float* dst = out.raw() + b * per;
    for (std::size_t k = 0; k < per; ++k) dst[k] = (src[k] - kNormMean) / kNormStd;
  }
  return out;
}

namespace {

TensorF gather_labels(const DatasetBundle& data, std::span<const std::size_t> indices) {
  const std::size_t C = data.labels.dim(1);
  TensorF out({indices.size(), C});
  for (std::size_t b = 0; b < indices.size(); ++b)
    for (std::size_t k = 0; k < C; ++k) out[b * C + k] = data.labels[indices[b] * C + k];
  return out;
}

void flip_in_place(TensorF& batch, std::size_t b, bool horizontal) {
  const std::size_t H = batch.dim(1), W = batch.dim(2), C = batch.dim(3);
  if (horizontal) {
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W / 2; ++x)
        for (std::size_t c = 0; c < C; ++c) std::swap(batch.at(b, y, x, c), batch.at(b, y, W - 1 - x, c));
  } else {
    for (std::size_t y = 0; y < H / 2; ++y)
      for (std::size_t x = 0; x < W; ++x)
        for (std::size_t c = 0; c < C; ++c) std::swap(batch.at(b, y, x, c), batch.at(b, H - 1 - y, x, c));
  }
}

void check_mask(const FreezeMask& mask, const WeightStore& w) {
  std::vector<std::string> missing;
  for (const auto& e : w.entries())
    if (!mask.count(e.name)) missing.push_back(e.name);
  if (!missing.empty()) {
    std::string msg = "freeze mask does not cover:";
    for (const auto& m : missing) msg += " " + m;
    throw InvalidArgument(msg);
  }
}

}  // namespace

EvalResult evaluate(const ModelGraph& graph, const WeightStore& weights, const DatasetBundle& data,
                    std::size_t batch, std::size_t limit, BnHyper bn) {
  if (data.num_classes() != graph.num_classes)
    throw ShapeError("dataset has " + std::to_string(data.num_classes()) + " classes, graph " +
                     std::to_string(graph.num_classes));
  const std::size_t n = limit == 0 ? data.size() : std::min(limit, data.size());
  const std::size_t C = graph.num_classes;
  if (batch == 0) batch = 64;
  Network<float> net(graph, bn);
  WeightStore w = weights;
  EvalResult out;
  out.scores = TensorD({n, C});
  TensorF labels({n, C});
  double loss_sum = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += batch) {
    const std::size_t count = std::min(batch, n - start);
    idx.resize(count);
    for (std::size_t k = 0; k < count; ++k) idx[k] = start + k;
    const TensorF x = make_batch(data, idx);
    const TensorF y = gather_labels(data, idx);
    const TensorF logits = net.forward(x, w, BnMode::infer);
    loss_sum += multilabel_bce(logits, y).loss * static_cast<double>(count);
    for (std::size_t k = 0; k < count * C; ++k) {
      out.scores[start * C + k] = logits[k];
      labels[start * C + k] = y[k];
    }
  }
  out.mean_loss = n ? loss_sum / static_cast<double>(n) : 0.0;
  out.auc = n ? per_class_auc(out.scores, labels) : std::vector<std::optional<double>>(C);
  out.mean_auc = mean_auc(out.auc);
  return out;
}

TrainResult train(const ModelGraph& graph, WeightStore weights, const DatasetBundle& train_set,
                  const DatasetBundle& eval_set, const TrainConfig& config, const FreezeMask* mask,
                  const ProgressFn& progress) {
  check_store_matches(weights, graph);
  if (mask) check_mask(*mask, weights);
  if (config.batch < 2) throw InvalidArgument("batch size must be at least 2 for batch-norm training");
  if (train_set.size() < config.batch && config.steps > 0)
    throw InvalidArgument("training set (" + std::to_string(train_set.size()) + ") smaller than one batch");
  if (train_set.num_classes() != graph.num_classes)
    throw ShapeError("training set has " + std::to_string(train_set.num_classes()) + " classes, graph " +
                     std::to_string(graph.num_classes));

  Network<float> net(graph, config.bn);
  Optimizer<float> opt(config.optimizer);
  LrSchedule schedule = config.schedule;
  const std::size_t steps_per_epoch = std::max<std::size_t>(1, train_set.size() / config.batch);
  if (schedule.steps_per_epoch == 0) schedule.steps_per_epoch = steps_per_epoch;

  std::vector<bool> train_param(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const auto& e = weights.entry(i);
    train_param[i] = is_trainable(e.role) && (!mask || mask->at(e.name));
  }

  TrainResult result;
  std::vector<std::size_t> order;
  std::size_t order_epoch = static_cast<std::size_t>(-1);
  auto batch_indices = [&](std::size_t step_index) {
    const std::size_t epoch = step_index / steps_per_epoch;
    if (epoch != order_epoch) {
      RngStream s(config.seed, "train/epoch/" + std::to_string(epoch));
      order = rng_permutation(s, train_set.size());
      order_epoch = epoch;
    }
    const std::size_t off = (step_index % steps_per_epoch) * config.batch;
    return std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(off),
                                    order.begin() + static_cast<std::ptrdiff_t>(off + config.batch));
  };

  auto log_entry = [&](std::size_t step, double loss, double sec) {
    LogEntry e;
    e.step = step;
    e.loss = loss;
    e.auc = evaluate(graph, weights, eval_set, config.eval_batch, config.eval_max, config.bn).auc;
    e.lr = schedule.lr_at(step);
    e.seconds_per_step = sec;
    result.log.entries.push_back(e);
    if (progress) progress(result.log.entries.back());
    if (config.stop) {
      auto v = result.log.metric(result.log.entries.back(), config.stop->metric);
      return v && *v >= config.stop->threshold;
    }
    return false;
  };

  // Step-0 loss: inference-mode loss on the first minibatch (no state change).
  double loss0 = 0.0;
  if (train_set.size() >= config.batch) {
    const auto idx = batch_indices(0);
    WeightStore probe = weights;
    loss0 = multilabel_bce(net.forward(make_batch(train_set, idx), probe, BnMode::infer),
                           gather_labels(train_set, idx))
                .loss;
  }
  bool stop = log_entry(0, loss0, 0.0);

  double loss_acc = 0.0;
  std::size_t loss_n = 0;
  auto t_last = std::chrono::steady_clock::now();
  std::vector<Tensor<float>*> params(weights.size());
  std::vector<const Tensor<float>*> grads(weights.size());

  std::size_t step = 0;
  while (!stop && step < config.steps) {
    const auto idx = batch_indices(step);
    TensorF x = make_batch(train_set, idx);
    if (config.hflip || config.vflip) {
      RngStream fs(config.seed, "train/flip/" + std::to_string(step));
      for (std::size_t b = 0; b < idx.size(); ++b) {
        if (config.hflip && fs.uniform() < 0.5) flip_in_place(x, b, true);
        if (config.vflip && fs.uniform() < 0.5) flip_in_place(x, b, false);
      }
    }
    const TensorF y = gather_labels(train_set, idx);
    const TensorF logits = net.forward(x, weights, BnMode::train, mask);
    auto loss = multilabel_bce(logits, y);
    ++step;
    if (!std::isfinite(loss.loss))
      throw DivergenceError(step, "loss became non-finite at step " + std::to_string(step));
    auto g = net.backward(loss.grad, weights, mask);
    for (std::size_t i = 0; i < weights.size(); ++i) {
      params[i] = &weights.entry(i).value;
      grads[i] = train_param[i] && !g.params[i].empty() ? &g.params[i] : nullptr;
    }
    opt.step(params, grads, schedule.lr_at(step - 1));
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (!grads[i]) continue;
      const auto& w = weights.entry(i).value;
      for (std::size_t k = 0; k < w.size(); ++k)
        if (!std::isfinite(w[k]))
          throw DivergenceError(step, "parameter '" + weights.entry(i).name + "' became non-finite at step " +
                                          std::to_string(step));
    }
    loss_acc += loss.loss;
    ++loss_n;

    const bool at_eval = (config.eval_every > 0 && step % config.eval_every == 0) || step == config.steps;
    if (at_eval) {
      const auto now = std::chrono::steady_clock::now();
      const double sec = std::chrono::duration<double>(now - t_last).count() / static_cast<double>(loss_n);
      stop = log_entry(step, loss_acc / static_cast<double>(loss_n), sec);
      loss_acc = 0.0;
      loss_n = 0;
      t_last = std::chrono::steady_clock::now();
    }
  }
  result.steps_run = step;
  result.weights = std::move(weights);
  return result;
}

}  // namespace trlab::nn
