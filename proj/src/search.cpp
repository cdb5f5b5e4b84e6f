// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#include "sprout/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include <fmt/core.h>

#include "sprout/autodiff.hpp"
#include "sprout/checkpoint.hpp"
#include "sprout/log.hpp"
#include "sprout/train.hpp"

namespace sprout {
namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive(std::uint64_t seed, std::uint64_t salt) { return splitmix(seed ^ splitmix(salt)); }

// Cross-multiplied test: is b strictly above the segment a-c?
bool above(const HullPoint& a, const HullPoint& b, const HullPoint& c) {
  return (b.error - a.error) * (c.cost - a.cost) > (c.error - a.error) * (b.cost - a.cost);
}

template <typename T>
class Channel {
 public:
  void push(T value) {
    {
      std::lock_guard lock(mu_);
      queue_.push_back(std::move(value));
    }
    cv_.notify_one();
  }
  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return closed_ || !queue_.empty(); });
    if (queue_.empty()) return std::nullopt;
    T v = std::move(queue_.front());
    queue_.pop_front();
    return v;
  }
  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<T> queue_;
  bool closed_ = false;
};

struct Job {
  int iter = 0;
  int child_id = 0;
  int parent_id = 0;
  Model parent;
};

struct JobResult {
  Job job;
  int worker = 0;
  GrowthResult growth;
  std::optional<double> val_error;
};

int class_count(const Dataset& data) {
  if (data.task == Task::classification) return data.classes;
  return data.targets.rank() <= 1 ? 1 : static_cast<int>(numel(data.targets.shape) / data.targets.dim(0));
}

TrainOptions train_options(const RunConfig& config, int epochs, std::uint64_t seed) {
  TrainOptions o;
  o.epochs = epochs;
  o.lr0 = config.lr0;
  o.weight_decay = config.weight_decay;
  o.batch_size = config.batch_size;
  o.seed = seed;
  return o;
}

}  // namespace

std::vector<std::size_t> lower_convex_hull(const std::vector<HullPoint>& points) {
  if (points.empty()) throw Error("lower_convex_hull needs at least one point");
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (points[a].cost != points[b].cost) return points[a].cost < points[b].cost;
    if (points[a].error != points[b].error) return points[a].error < points[b].error;
    return a < b;
  });
  // Keep the best point per cost, then drop anything not strictly more
  // accurate than every cheaper point.
  std::vector<std::size_t> frontier;
  for (auto i : order) {
    if (!frontier.empty() && points[frontier.back()].cost == points[i].cost) continue;
    if (!frontier.empty() && points[i].error >= points[frontier.back()].error) continue;
    frontier.push_back(i);
  }
  std::vector<std::size_t> hull;
  for (auto i : frontier) {
    while (hull.size() >= 2 && above(points[hull[hull.size() - 2]], points[hull.back()], points[i])) hull.pop_back();
    hull.push_back(i);
  }
  return hull;
}

std::size_t pick_parent_index(const std::vector<std::int64_t>& counts, std::mt19937_64& rng) {
  if (counts.empty()) throw Error("cannot sample a parent from an empty hull");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (;;) {
    for (std::size_t k = 0; k < counts.size(); ++k) {
      if (u(rng) < 1.0 / static_cast<double>(counts[k] + 1)) return k;
    }
  }
}

std::vector<double> parent_distribution(const std::vector<std::int64_t>& counts) {
  std::vector<double> q(counts.size());
  double none = 1.0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    const double p = 1.0 / static_cast<double>(counts[k] + 1);
    q[k] = none * p;
    none *= 1.0 - p;
  }
  const double total = 1.0 - none;
  for (auto& v : q) v /= total;
  return q;
}

std::string_view to_string(RecordStatus status) {
  switch (status) {
    case RecordStatus::training: return "training";
    case RecordStatus::done: return "done";
    case RecordStatus::failed: return "failed";
  }
  return "training";
}

void SearchState::update_hull() {
  std::vector<HullPoint> points;
  std::vector<int> ids;
  for (const auto& [id, r] : records) {
    if (r.status != RecordStatus::done || !r.val_error) continue;
    points.push_back({static_cast<double>(r.cost), *r.val_error});
    ids.push_back(id);
  }
  hull.clear();
  if (points.empty()) return;
  for (auto i : lower_convex_hull(points)) hull.push_back(ids[i]);
}

int sample_parent(SearchState& state, std::mt19937_64& rng) {
  if (state.hull.empty()) throw Error("cannot sample a parent from an empty hull");
  std::vector<int> by_accuracy(state.hull.rbegin(), state.hull.rend());
  std::vector<std::int64_t> counts;
  for (int id : by_accuracy) counts.push_back(state.records.at(id).sample_count);
  const int chosen = by_accuracy[pick_parent_index(counts, rng)];
  ++state.records.at(chosen).sample_count;
  return chosen;
}

std::vector<int> filter_for_final(const SearchState& state, std::int64_t budget) {
  std::vector<int> out;
  const double lo = 0.8 * static_cast<double>(budget), hi = 1.2 * static_cast<double>(budget);
  for (int id : state.hull) {
    const double c = static_cast<double>(state.records.at(id).cost);
    if (c >= lo && c <= hi) out.push_back(id);
  }
  if (!out.empty() || state.hull.empty()) return out;
  int best = state.hull.front();
  for (int id : state.hull) {
    const auto d = std::llabs(state.records.at(id).cost - budget);
    const auto bd = std::llabs(state.records.at(best).cost - budget);
    if (d < bd || (d == bd && state.records.at(id).cost < state.records.at(best).cost)) best = id;
  }
  return {best};
}

double evaluate(const Graph& graph, const ParameterStore& params, const Dataset& validation) {
  if (validation.size() == 0) throw Error("validation set is empty");
  const auto batch = validation.all();
  const auto fwd = forward(graph, params, batch, Mode::eval);
  if (validation.task == Task::regression) return fwd.loss / (1.0 + fwd.loss);
  const auto& pred = fwd.at(graph.prediction_id());
  const auto rows = pred.dim(0), k = pred.dim(1);
  std::int64_t wrong = 0;
  for (std::int64_t r = 0; r < rows; ++r) {
    std::int64_t arg = 0;
    for (std::int64_t j = 1; j < k; ++j) {
      if (pred.data[r * k + j] > pred.data[r * k + arg]) arg = j;
    }
    if (arg != static_cast<std::int64_t>(batch.targets.data[r])) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(rows);
}

Model train_seed(const RunConfig& config, const Dataset& train) {
  const auto genotype = seed_genotype(config.mode, config.opset, config.skeleton, config.merge, train.example_shape(),
                                      class_count(train), train.task);
  Model m = build_model(genotype, derive(config.seed, 1));
  sprout::train(m.graph, m.params, train, train_options(config, config.seed_epochs, derive(config.seed, 2)));
  return m;
}

GrowthResult grow_child(const Model& parent, const RunConfig& config, const Dataset& train, std::uint64_t seed) {
  GrowthResult result;
  const auto normal = parent.genotype.normal_cells();
  if (normal.empty()) throw Error("parent has no normal cell to grow");
  const int rep = normal.back();
  NodePredicate pick;
  if (config.mode == SearchMode::cell) {
    pick = [rep](const Node& n) { return n.cell == rep; };
  } else {
    pick = [](const Node&) { return true; };
  }
  CandidateOptions copts;
  copts.lambda = config.lambda;
  copts.opset = opset_by_name(config.opset);
  copts.joint = !config.isolated;
  copts.seed = derive(seed, 1);
  copts.mode = config.mode;
  auto aug = initialize_candidates(parent.graph, parent.params, pick, copts);
  if (aug.candidates.empty()) {
    result.failed = true;
    result.message = "no boostable layer";
    return result;
  }
  WeakLearnOptions wopts;
  wopts.train = train_options(config, config.weak_epochs, derive(seed, 2));
  const auto wl = weak_learn(aug, parent.params, train, wopts);
  result.weak_compute = static_cast<double>(graph_cost(aug.graph, aug.params)) * static_cast<double>(wl.stats.examples);
  if (wl.diverged) {
    result.failed = true;
    result.message = wl.message;
    return result;
  }
  std::ostringstream report;
  write_candidate_report(report, aug.candidates, aug.params, config.i_max);
  result.candidate_report = report.str();
  finalize_candidates(aug.graph, aug.params, aug.candidates, config.i_max, config.merge);
  const auto grown = extract_genotype(aug.graph, parent.genotype);
  Genotype genotype = grown;
  if (config.mode == SearchMode::cell) {
    const auto& groups = grown.cells.at(static_cast<std::size_t>(rep)).groups;
    genotype = apply_tying(parent.genotype, rep, groups.back());
  }
  result.child = build_model(genotype, derive(seed, 3), &aug.params);
  try {
    const auto stats = sprout::train(result.child.graph, result.child.params, train,
                                     train_options(config, config.child_epochs, derive(seed, 4)));
    result.child_compute = static_cast<double>(graph_cost(result.child.graph, result.child.params)) *
                           static_cast<double>(stats.examples);
  } catch (const NumericError& e) {
    result.failed = true;
    result.message = fmt::format("child training diverged at node {}: {}", e.node(), e.what());
  }
  for (int c : result.child.graph.cells()) result.cell_hashes.push_back(cell_hash(result.child.graph, c));
  return result;
}

nlohmann::json to_json(const SearchEvent& e) {
  nlohmann::json j{{"iter", e.iter},
                   {"worker", e.worker},
                   {"parent_id", e.parent_id},
                   {"child_id", e.child_id},
                   {"cost", e.cost},
                   {"params", e.param_count},
                   {"val_error", nullptr},
                   {"wall_time", e.wall_time},
                   {"amortization", e.amortization},
                   {"status", e.status}};
  if (e.val_error) j["val_error"] = *e.val_error;
  return j;
}

SearchOutput search_loop(const RunConfig& config, const Dataset& train, const Dataset& validation,
                         const std::filesystem::path& out_dir) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };
  const bool write = !out_dir.empty();
  std::ofstream log;
  if (write) {
    std::filesystem::create_directories(out_dir / "genotypes");
    std::filesystem::create_directories(out_dir / "checkpoints");
    log.open(out_dir / "search.jsonl", std::ios::trunc);
    if (!log) throw Error(fmt::format("cannot write search log in '{}'", out_dir.string()));
  }

  SearchOutput out;
  auto& state = out.state;
  state.seed = config.seed;
  state.budget = config.cost_budget;
  std::map<int, Model> models;
  double worst_ratio = 0.0;

  auto record_model = [&](ModelRecord& rec, const Model& m, const SearchEvent& event) {
    if (write) {
      write_text(out_dir / "genotypes" / fmt::format("model_{}.json", rec.id), rec.genotype.to_json().dump(2) + "\n");
      if (rec.status == RecordStatus::done) {
        const auto dir = out_dir / "checkpoints" / fmt::format("model_{}", rec.id);
        save_checkpoint(m, dir);
        rec.checkpoint = std::filesystem::relative(dir, out_dir).string();
      }
      log << to_json(event).dump() << '\n';
      log.flush();
    }
    out.events.push_back(event);
  };

  {
    Model seed = train_seed(config, train);
    ModelRecord rec;
    rec.id = 0;
    rec.genotype = seed.genotype;
    rec.cost = graph_cost(seed.graph, seed.params);
    rec.param_count = seed.params.trainable_count();
    rec.val_error = evaluate(seed.graph, seed.params, validation);
    rec.status = RecordStatus::done;
    SearchEvent ev{0, 0, -1, 0, rec.cost, rec.param_count, rec.val_error, elapsed(), 0.0, "done"};
    record_model(rec, seed, ev);
    state.records[0] = rec;
    models.emplace(0, std::move(seed));
    state.update_hull();
  }

  std::mt19937_64 rng(derive(config.seed, 7));
  auto run_job = [&config, &train, &validation](Job job, int worker) {
    JobResult r;
    r.worker = worker;
    try {
      r.growth = grow_child(job.parent, config, train, derive(config.seed, 1000 + static_cast<std::uint64_t>(job.child_id)));
      if (!r.growth.failed) r.val_error = evaluate(r.growth.child.graph, r.growth.child.params, validation);
    } catch (const std::exception& e) {
      r.growth.failed = true;
      r.growth.message = e.what();
    }
    job.parent = Model{};
    r.job = std::move(job);
    return r;
  };

  Channel<Job> jobs;
  Channel<JobResult> results;
  std::vector<std::thread> pool;
  if (config.workers > 1) {
    for (int w = 0; w < config.workers; ++w) {
      pool.emplace_back([&, w] {
        while (auto job = jobs.pop()) results.push(run_job(std::move(*job), w));
      });
    }
  }

  int dispatched = 0, in_flight = 0, next_id = 1;
  std::deque<JobResult> inline_results;
  for (;;) {
    const bool out_of_time = config.max_seconds > 0.0 && elapsed() >= config.max_seconds;
    while (in_flight < config.workers && dispatched < config.growth_iterations && !out_of_time) {
      Job job;
      job.iter = ++dispatched;
      job.child_id = next_id++;
      job.parent_id = sample_parent(state, rng);
      job.parent = models.at(job.parent_id);
      ModelRecord rec;
      rec.id = job.child_id;
      rec.parent_id = job.parent_id;
      rec.status = RecordStatus::training;
      state.records[rec.id] = rec;
      ++in_flight;
      if (config.workers > 1) {
        jobs.push(std::move(job));
      } else {
        inline_results.push_back(run_job(std::move(job), 0));
      }
    }
    if (in_flight == 0) break;
    JobResult r;
    if (config.workers > 1) {
      r = std::move(*results.pop());
    } else {
      r = std::move(inline_results.front());
      inline_results.pop_front();
    }
    --in_flight;
    state.iteration = std::max(state.iteration, r.job.iter);
    auto& rec = state.records.at(r.job.child_id);
    SearchEvent ev;
    ev.iter = r.job.iter;
    ev.worker = r.worker;
    ev.parent_id = r.job.parent_id;
    ev.child_id = r.job.child_id;
    ev.wall_time = elapsed();
    if (r.growth.failed) {
      rec.status = RecordStatus::failed;
      rec.message = r.growth.message;
      rec.genotype = models.at(r.job.parent_id).genotype;
      ev.status = "failed";
      warn(fmt::format("model {} failed: {}", rec.id, rec.message));
      if (write) log << to_json(ev).dump() << '\n';
      out.events.push_back(ev);
      continue;
    }
    const auto& child = r.growth.child;
    rec.genotype = child.genotype;
    rec.cost = graph_cost(child.graph, child.params);
    rec.param_count = child.params.trainable_count();
    rec.val_error = r.val_error;
    rec.status = RecordStatus::done;
    ev.cost = rec.cost;
    ev.param_count = rec.param_count;
    ev.val_error = rec.val_error;
    ev.amortization = r.growth.child_compute > 0.0 ? r.growth.weak_compute / r.growth.child_compute : 0.0;
    ev.status = "done";
    worst_ratio = std::max(worst_ratio, ev.amortization);
    if (write) {
      write_text(out_dir / "candidates" / fmt::format("model_{}.jsonl", rec.id), r.growth.candidate_report);
    }
    record_model(rec, child, ev);
    models.emplace(rec.id, std::move(r.growth.child));
    state.update_hull();
  }
  jobs.close();
  for (auto& t : pool) t.join();

  nlohmann::json records = nlohmann::json::array();
  for (const auto& [id, r] : state.records) {
    nlohmann::json j{{"id", id},
                     {"parent_id", r.parent_id},
                     {"cost", r.cost},
                     {"params", r.param_count},
                     {"val_error", nullptr},
                     {"sample_count", r.sample_count},
                     {"status", std::string(to_string(r.status))},
                     {"genotype", fmt::format("genotypes/model_{}.json", id)}};
    if (r.val_error) j["val_error"] = *r.val_error;
    if (!r.checkpoint.empty()) j["checkpoint"] = r.checkpoint;
    records.push_back(std::move(j));
  }
  out.manifest = {
      {"schema", "sprout.manifest/1"},
      {"config", config.to_json()},
      {"seed", config.seed},
      {"dataset_hash", fmt::format("{:016x}", dataset_hash(train) ^ splitmix(dataset_hash(validation)))},
      {"train_size", train.size()},
      {"val_size", validation.size()},
      {"error_metric", validation.task == Task::classification ? std::string("misclassification_rate")
                                                                : std::string(kRegressionNormalization)},
      {"models", std::move(records)},
      {"hull", state.hull},
      {"amortization", {{"bound", config.amortization_bound},
                        {"max_ratio", worst_ratio},
                        {"within_bound", worst_ratio <= config.amortization_bound}}},
  };
  if (worst_ratio > config.amortization_bound) {
    warn(fmt::format("weak-learning compute ratio {:.3f} exceeds the bound {}", worst_ratio, config.amortization_bound));
  }
  if (config.cost_budget > 0 && !state.hull.empty()) {
    out.manifest["final_candidates"] = filter_for_final(state, config.cost_budget);
  }
  if (write) {
    write_text(out_dir / "manifest.json", out.manifest.dump(2) + "\n");
    write_text(out_dir / "hull.csv", hull_csv(out.events));
  }
  return out;
}

std::vector<SearchEvent> read_search_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(fmt::format("cannot open search log '{}'", path.string()));
  std::vector<SearchEvent> events;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      SearchEvent e;
      e.iter = j.at("iter").get<int>();
      e.worker = j.at("worker").get<int>();
      e.parent_id = j.at("parent_id").get<int>();
      e.child_id = j.at("child_id").get<int>();
      e.cost = j.at("cost").get<std::int64_t>();
      e.param_count = j.value("params", std::int64_t{0});
      if (!j.at("val_error").is_null()) e.val_error = j.at("val_error").get<double>();
      e.wall_time = j.value("wall_time", 0.0);
      e.amortization = j.value("amortization", 0.0);
      e.status = j.value("status", std::string("done"));
      events.push_back(e);
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError(fmt::format("{}:{}: malformed event: {}", path.string(), lineno, ex.what()));
    }
  }
  return events;
}

std::string hull_csv(const std::vector<SearchEvent>& events) {
  std::vector<HullPoint> points;
  std::vector<const SearchEvent*> src;
  for (const auto& e : events) {
    if (e.status != "done" || !e.val_error) continue;
    points.push_back({static_cast<double>(e.cost), *e.val_error});
    src.push_back(&e);
  }
  std::string csv = "model_id,cost,params,val_error\n";
  if (points.empty()) return csv;
  for (auto i : lower_convex_hull(points)) {
    const auto& e = *src[i];
    csv += fmt::format("{},{},{},{}\n", e.child_id, e.cost, e.param_count, *e.val_error);
  }
  return csv;
}

}  // namespace sprout
