// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#include "sprout/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>

#include <fmt/core.h>

#include "CLI11.hpp"
#include "sprout/checkpoint.hpp"
#include "sprout/config.hpp"
#include "sprout/fslr.hpp"
#include "sprout/log.hpp"
#include "sprout/search.hpp"

namespace fs = std::filesystem;

namespace sprout {
namespace {

struct Options {
  std::string config;
  std::string out;
  std::string checkpoint;
  std::string genotype;
  std::string log;
  std::string design;
  std::string target;
  double step = 0.01;
  std::int64_t iters = 1000;
  bool no_standardize = false;
  int workers = 0;
};

RunConfig load_config(const Options& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : RunConfig::load(o.config);
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) c.output_dir = env;
  if (!o.out.empty()) c.output_dir = o.out;
  if (o.workers > 0) c.workers = o.workers;
  c.validate();
  return c;
}

std::pair<Dataset, Dataset> load_data(const RunConfig& c) {
  return split(generate(c.dataset), c.dataset.val_fraction);
}

std::string fmt_error(const std::optional<double>& e) { return e ? fmt::format("{:.6f}", *e) : std::string("-"); }

int cmd_seed(const Options& o, std::ostream& out) {
  const auto c = load_config(o);
  const auto [train, val] = load_data(c);
  const auto model = train_seed(c, train);
  const fs::path dir = fs::path(c.output_dir) / "seed";
  save_checkpoint(model, dir);
  out << fmt::format("seed model: cost={} params={} val_error={:.6f}\ncheckpoint: {}\n", graph_cost(model.graph, model.params),
                     model.params.trainable_count(), evaluate(model.graph, model.params, val), dir.string());
  return kExitOk;
}

int cmd_search(const Options& o, std::ostream& out) {
  const auto c = load_config(o);
  const auto [train, val] = load_data(c);
  const auto result = search_loop(c, train, val, c.output_dir);
  out << fmt::format("{} models, hull:\n", result.state.records.size());
  out << "model_id,cost,params,val_error\n";
  for (int id : result.state.hull) {
    const auto& r = result.state.records.at(id);
    out << fmt::format("{},{},{},{}\n", id, r.cost, r.param_count, fmt_error(r.val_error));
  }
  out << fmt::format("artifacts: {}\n", c.output_dir);
  return kExitOk;
}

int cmd_grow(const Options& o, std::ostream& out) {
  const auto c = load_config(o);
  const auto [train, val] = load_data(c);
  const auto parent = load_checkpoint(o.checkpoint);
  auto result = grow_child(parent, c, train, c.seed);
  if (result.failed) throw Error(result.message);
  const fs::path dir = fs::path(c.output_dir) / "grown";
  save_checkpoint(result.child, dir);
  write_text(dir / "candidates.jsonl", result.candidate_report);
  out << fmt::format("child: cost={} params={} val_error={:.6f}\ncheckpoint: {}\n",
                     graph_cost(result.child.graph, result.child.params), result.child.params.trainable_count(),
                     evaluate(result.child.graph, result.child.params, val), dir.string());
  return kExitOk;
}

int cmd_finalize(const Options& o, std::ostream& out) {
  const auto c = load_config(o);
  const auto model = load_checkpoint(o.checkpoint);
  const auto final_model = build_model(model.genotype, c.seed, &model.params, true);
  const fs::path dir = fs::path(c.output_dir) / "final";
  save_checkpoint(final_model, dir);
  out << fmt::format("final model: cost={} params={}\ncheckpoint: {}\n", graph_cost(final_model.graph, final_model.params),
                     final_model.params.trainable_count(), dir.string());
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const auto c = load_config(o);
  const auto [train, val] = load_data(c);
  const auto model = load_checkpoint(o.checkpoint);
  out << fmt::format("val_error={:.6f} cost={} params={}\n", evaluate(model.graph, model.params, val),
                     graph_cost(model.graph, model.params), model.params.trainable_count());
  return kExitOk;
}

int cmd_hull(const Options& o, std::ostream& out) {
  out << hull_csv(read_search_log(o.log));
  return kExitOk;
}

int cmd_export_dot(const Options& o, std::ostream& out) {
  Graph graph;
  if (!o.checkpoint.empty()) {
    graph = Graph::from_json(read_json(fs::path(o.checkpoint) / "graph.json"));
  } else if (!o.genotype.empty()) {
    graph = build_model(Genotype::from_json(read_json(o.genotype)), 0).graph;
  } else {
    throw ConfigError("export-dot needs --checkpoint or --genotype");
  }
  const auto dot = graph.to_dot();
  if (o.out.empty()) {
    out << dot;
  } else {
    write_text(o.out, dot);
    out << fmt::format("wrote {}\n", o.out);
  }
  return kExitOk;
}

int cmd_plot_data(const Options& o, std::ostream& out) {
  const auto events = read_search_log(o.log);
  nlohmann::json scatter = nlohmann::json::array(), hull = nlohmann::json::array();
  std::vector<HullPoint> points;
  std::vector<const SearchEvent*> src;
  int excluded = 0;
  for (const auto& e : events) {
    if (e.status != "done" || !e.val_error) {
      ++excluded;
      continue;
    }
    scatter.push_back({{"model_id", e.child_id}, {"cost", e.cost}, {"val_error", *e.val_error}});
    points.push_back({static_cast<double>(e.cost), *e.val_error});
    src.push_back(&e);
  }
  if (points.empty()) {
    warn("no evaluated models; emitting empty series");
  } else {
    for (auto i : lower_convex_hull(points)) {
      hull.push_back({{"model_id", src[i]->child_id}, {"cost", src[i]->cost}, {"val_error", *src[i]->val_error}});
    }
  }
  const nlohmann::json doc{{"schema", "sprout.plot/1"}, {"scatter", scatter}, {"hull", hull}, {"excluded", excluded}};
  if (o.out.empty()) {
    out << doc.dump(2) << '\n';
  } else {
    write_text(o.out, doc.dump(2) + "\n");
  }
  out << fmt::format("{} models plotted, {} on hull, {} excluded without val_error\n", scatter.size(), hull.size(),
                     excluded);
  return kExitOk;
}

int cmd_fslr(const Options& o, std::ostream& out) {
  const auto rows = read_csv_matrix(o.design);
  const auto target = read_csv_matrix(o.target);
  if (target.size() != rows.size()) {
    throw ConfigError(fmt::format("design has {} rows but target has {}", rows.size(), target.size()));
  }
  std::vector<double> values, y;
  for (const auto& r : rows) values.insert(values.end(), r.begin(), r.end());
  for (const auto& r : target) y.push_back(r.at(0));
  DesignMatrix x(static_cast<std::int64_t>(rows.size()), static_cast<std::int64_t>(rows.front().size()), values);
  if (!o.no_standardize) x = standardize(x);
  const auto path = fslr_run(x, y, o.step, o.iters);
  const auto ls = least_squares(x, y);
  const fs::path dest = o.out.empty() ? fs::path("fslr_path.csv") : fs::path(o.out);
  write_text(dest, path.to_csv());
  out << fmt::format("final residual {:.6g}, least-squares residual {:.6g}\npath: {}\n", path.final_residual_norm(),
                     ls.residual_norm, dest.string());
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Grows small networks by boosting shortcut weak learners onto their layers.", "sprout"};
  app.require_subcommand(1);
  Options o;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Run configuration (JSON)");
    sub->add_option("--out", o.out, "Output directory");
  };
  auto* seed = app.add_subcommand("seed", "Build and train the seed model");
  add_config(seed);
  auto* search = app.add_subcommand("search", "Run the architecture search");
  add_config(search);
  search->add_option("--workers", o.workers, "Worker threads (overrides the config)");
  auto* grow = app.add_subcommand("grow", "Grow one child from a checkpoint");
  add_config(grow);
  grow->add_option("--checkpoint", o.checkpoint, "Parent checkpoint directory")->required();
  auto* finalize = app.add_subcommand("finalize", "Instantiate the final model of a checkpoint's genotype");
  add_config(finalize);
  finalize->add_option("--checkpoint", o.checkpoint, "Checkpoint directory")->required();
  auto* eval = app.add_subcommand("eval", "Validation error of a checkpoint");
  add_config(eval);
  eval->add_option("--checkpoint", o.checkpoint, "Checkpoint directory")->required();
  auto* hull = app.add_subcommand("hull", "Print the hull table from a search log");
  hull->add_option("--log", o.log, "search.jsonl")->required();
  auto* dot = app.add_subcommand("export-dot", "Write a Graphviz rendering of a model");
  dot->add_option("--checkpoint", o.checkpoint, "Checkpoint directory");
  dot->add_option("--genotype", o.genotype, "Genotype file");
  dot->add_option("--out", o.out, "Destination .dot file (default stdout)");
  auto* plot = app.add_subcommand("plot-data", "Scatter and hull series from a search log");
  plot->add_option("--log", o.log, "search.jsonl")->required();
  plot->add_option("--out", o.out, "Destination JSON file (default stdout)");
  auto* fslr = app.add_subcommand("fslr", "Forward-stagewise linear regression");
  fslr->add_option("--design", o.design, "Design matrix CSV")->required();
  fslr->add_option("--target", o.target, "Target CSV (first column)")->required();
  fslr->add_option("--step", o.step, "Step size");
  fslr->add_option("--iters", o.iters, "Iterations");
  fslr->add_option("--out", o.out, "Coefficient path CSV");
  fslr->add_flag("--no-standardize", o.no_standardize, "Use the design as given");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::Success&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*seed) return cmd_seed(o, out);
    if (*search) return cmd_search(o, out);
    if (*grow) return cmd_grow(o, out);
    if (*finalize) return cmd_finalize(o, out);
    if (*eval) return cmd_eval(o, out);
    if (*hull) return cmd_hull(o, out);
    if (*dot) return cmd_export_dot(o, out);
    if (*plot) return cmd_plot_data(o, out);
    if (*fslr) return cmd_fslr(o, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace sprout
