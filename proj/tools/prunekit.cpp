#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "prunekit/format.hpp"
#include "prunekit/inference.hpp"
#include "prunekit/model.hpp"
#include "prunekit/pruner.hpp"
#include "prunekit/ranking.hpp"
#include "prunekit/sensitivity.hpp"

namespace {

using namespace prunekit;

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "' for reading");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::IoError, "read failure on '" + path + "'");
  return text;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failure on '" + path + "'");
}

// Decimal fraction with at most six decimals, parsed exactly in micro-units
// so grid values serialize cleanly (0.3 stays "0.3", never "0.299999...").
long long parse_micro(const std::string& s) {
  const auto bad = [&] {
    throw Error(ErrorCode::InvalidArgument,
                "'" + s + "' is not a decimal fraction with at most 6 decimals");
  };
  const std::size_t dot = s.find('.');
  const std::string whole = dot == std::string::npos ? s : s.substr(0, dot);
  std::string frac = dot == std::string::npos ? "" : s.substr(dot + 1);
  if ((whole.empty() && frac.empty()) || frac.size() > 6) bad();
  for (char c : whole + frac) {
    if (c < '0' || c > '9') bad();
  }
  long long micro = whole.empty() ? 0 : std::stoll(whole) * 1'000'000;
  frac.resize(6, '0');
  if (!frac.empty()) micro += std::stoll(frac);
  return micro;
}

// "start:stop:step" (inclusive, exact decimal steps) or a single fraction.
std::vector<double> parse_grid(const std::string& spec) {
  std::vector<std::string> parts;
  std::string part;
  for (char c : spec) {
    if (c == ':') {
      parts.push_back(part);
      part.clear();
    } else {
      part += c;
    }
  }
  parts.push_back(part);

  std::vector<double> grid;
  if (parts.size() == 1) {
    grid.push_back(static_cast<double>(parse_micro(parts[0])) / 1e6);
  } else if (parts.size() == 3) {
    const long long start = parse_micro(parts[0]);
    const long long stop = parse_micro(parts[1]);
    const long long step = parse_micro(parts[2]);
    if (step <= 0 || stop < start) {
      throw Error(ErrorCode::InvalidArgument, "bad ratio range '" + spec + "'");
    }
    for (long long v = start; v <= stop; v += step) {
      grid.push_back(static_cast<double>(v) / 1e6);
    }
  } else {
    throw Error(ErrorCode::InvalidArgument,
                "ratio grid must be 'start:stop:step' or a single fraction");
  }
  return grid;
}

// Either one fraction for every prunable layer, or "name=r,name=r,...".
std::map<std::string, double> parse_ratio_list(const std::string& spec, const ModelGraph& g) {
  std::vector<std::string> items;
  std::string item;
  for (char c : spec) {
    if (c == ',') {
      items.push_back(item);
      item.clear();
    } else {
      item += c;
    }
  }
  items.push_back(item);

  std::map<std::string, double> ratios;
  if (items.size() == 1 && items[0].find('=') == std::string::npos) {
    const double r = static_cast<double>(parse_micro(items[0])) / 1e6;
    for (const std::string& layer : prunable_layers(g)) ratios[layer] = r;
    return ratios;
  }
  for (const std::string& entry : items) {
    const std::size_t eq = entry.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error(ErrorCode::InvalidArgument, "bad ratio entry '" + entry + "'");
    }
    ratios[entry.substr(0, eq)] =
        static_cast<double>(parse_micro(entry.substr(eq + 1))) / 1e6;
  }
  return ratios;
}

ModelGraph load_model_arg(const std::string& path) {
  return load_model(path, blob_path_for(path));
}

SensitivityMap load_sensitivity_arg(const std::string& path) {
  const std::string text = read_text(path);
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
    return sensitivity_from_json(text);
  }
  return sensitivity_from_csv(text);
}

Method method_arg(const std::string& name) {
  const auto m = method_from_name(name);
  if (!m) throw Error(ErrorCode::InvalidArgument, "unknown method '" + name + "'");
  return *m;
}

std::string accuracy_line(const EvalResult& r) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "accuracy %.6g (%zu/%zu)", r.accuracy(), r.correct, r.total);
  return buf;
}

struct Options {
  std::string model, other, data, labels, out, json_out, plan_out, report_out;
  std::string method = "dscore", ratios, sensitivity, rankings, layer;
  double threshold = 0.0;
  std::size_t topk = 1;
};

int run_rank(const Options& opt) {
  const ModelGraph g = load_model_arg(opt.model);
  const Method method = method_arg(opt.method);
  std::vector<std::string> layers =
      opt.layer.empty() ? prunable_layers(g) : std::vector<std::string>{opt.layer};
  std::vector<FilterRanking> rankings;
  for (const std::string& layer : layers) {
    const LayerNode* node = g.find(layer);
    if (node == nullptr || node->kind != LayerKind::Conv2d) {
      throw Error(ErrorCode::NotPrunable, "layer '" + layer + "' is not a convolution");
    }
    rankings.push_back(rank_filters(g.tensors.at(node->weights.at("weight")), method, layer));
  }
  write_text(opt.out, rankings_to_json(rankings));
  return 0;
}

int run_sensitivity(const Options& opt) {
  const ModelGraph g = load_model_arg(opt.model);
  const Dataset d = load_dataset(opt.data, opt.labels);
  const std::vector<double> grid = parse_grid(opt.ratios.empty() ? "0.1:0.9:0.1" : opt.ratios);
  SensitivityMap m;
  if (opt.layer.empty()) {
    m = full_sensitivity(g, d, method_arg(opt.method), grid, opt.topk);
  } else {
    m.method = method_arg(opt.method);
    m.ratios = grid;
    m.baseline_accuracy = evaluate(g, d, opt.topk).accuracy();
    m.entries = sweep_layer(g, d, *m.method, opt.layer, grid, m.baseline_accuracy, opt.topk);
  }
  write_text(opt.out, sensitivity_csv(m));
  if (!opt.json_out.empty()) write_text(opt.json_out, sensitivity_json(m));
  return 0;
}

int run_prune(const Options& opt) {
  const ModelGraph g = load_model_arg(opt.model);
  const Method method = method_arg(opt.method);

  std::map<std::string, double> ratios;
  std::optional<double> threshold;
  if (!opt.sensitivity.empty()) {
    ratios = ratios_for_threshold(load_sensitivity_arg(opt.sensitivity), opt.threshold);
    threshold = opt.threshold;
  } else {
    ratios = parse_ratio_list(opt.ratios, g);
  }

  std::vector<FilterRanking> rankings;
  if (!opt.rankings.empty()) {
    rankings = rankings_from_json(read_text(opt.rankings));
    for (const FilterRanking& r : rankings) {
      if (r.method != method) {
        throw Error(ErrorCode::RankingMismatch,
                    "rankings file uses method '" + std::string(method_name(r.method)) +
                        "', requested '" + std::string(method_name(method)) + "'");
      }
    }
  } else {
    for (const auto& [layer, ratio] : ratios) {
      const LayerNode* node = g.find(layer);
      if (node == nullptr || node->kind != LayerKind::Conv2d) {
        throw Error(ErrorCode::NotPrunable, "layer '" + layer + "' is not a convolution");
      }
      if (node->residual_last) continue;  // build_plan records the warning
      rankings.push_back(rank_filters(g.tensors.at(node->weights.at("weight")), method, layer));
    }
  }

  PruningPlan plan = build_plan(g, rankings, ratios);
  plan.threshold = threshold;
  for (const std::string& warning : plan.warnings) {
    std::cerr << "warning: " << warning << "\n";
  }

  const ModelGraph pruned = apply_plan(g, plan);
  save_model(pruned, opt.out, blob_path_for(opt.out));
  if (!opt.plan_out.empty()) write_text(opt.plan_out, plan_to_json(plan));

  ReductionReport report;
  if (!opt.data.empty()) {
    const Dataset d = load_dataset(opt.data, opt.labels);
    report = reduction_report(g, pruned, evaluate(g, d, opt.topk).accuracy(),
                              evaluate(pruned, d, opt.topk).accuracy());
  } else {
    report = reduction_report(g, pruned);
  }
  std::cout << report_text(report);
  if (!opt.report_out.empty()) write_text(opt.report_out, report_json(report));
  return 0;
}

int run_eval(const Options& opt) {
  const ModelGraph g = load_model_arg(opt.model);
  const Dataset d = load_dataset(opt.data, opt.labels);
  std::cout << accuracy_line(evaluate(g, d, opt.topk)) << "\n";
  return 0;
}

int run_report(const Options& opt) {
  const ModelGraph before = load_model_arg(opt.model);
  const ModelGraph after = load_model_arg(opt.other);
  ReductionReport report;
  if (!opt.data.empty()) {
    const Dataset d = load_dataset(opt.data, opt.labels);
    report = reduction_report(before, after, evaluate(before, d, opt.topk).accuracy(),
                              evaluate(after, d, opt.topk).accuracy());
  } else {
    report = reduction_report(before, after);
  }
  std::cout << report_text(report);
  if (!opt.json_out.empty()) write_text(opt.json_out, report_json(report));
  return 0;
}

int run_signs(const Options& opt) {
  const ModelGraph g = load_model_arg(opt.model);
  const auto report = sign_ratio_report(g);
  write_text(opt.out, sign_report_json(report));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Filter-pruning toolkit: rank filters, sweep per-layer pruning "
               "sensitivity, prune structurally, and report Params/FLOPs reductions"};
  app.require_subcommand(1);
  Options opt;

  const auto add_model = [&](CLI::App* cmd) {
    cmd->add_option("--model", opt.model, "model manifest (.pkm; weights in the sibling .pkmt)")
        ->required()
        ->check(CLI::ExistingFile);
  };
  const auto add_dataset = [&](CLI::App* cmd, bool required) {
    auto* data = cmd->add_option("--data", opt.data, "dataset inputs blob");
    auto* labels = cmd->add_option("--labels", opt.labels, "dataset labels blob");
    data->check(CLI::ExistingFile);
    labels->check(CLI::ExistingFile);
    data->needs(labels);
    labels->needs(data);
    if (required) {
      data->required();
      labels->required();
    }
    cmd->add_option("--topk", opt.topk, "count a sample correct when the label ranks in the top k")
        ->check(CLI::Range(std::size_t{1}, std::size_t{1000}));
  };
  const auto add_method = [&](CLI::App* cmd) {
    cmd->add_option("--method", opt.method, "ranking method: l1 | l2 | dscore | dstep | dstepgm")
        ->check(CLI::IsMember({"l1", "l2", "dscore", "dstep", "dstepgm"}));
  };

  CLI::App* rank = app.add_subcommand("rank", "write per-layer filter rankings as JSON");
  add_model(rank);
  add_method(rank);
  rank->add_option("--layer", opt.layer, "rank only this layer (default: every prunable layer)");
  rank->add_option("--out", opt.out, "output JSON path")->required();

  CLI::App* sens = app.add_subcommand(
      "sensitivity", "sweep per-layer pruning ratios and record accuracy curves");
  add_model(sens);
  add_dataset(sens, true);
  add_method(sens);
  sens->add_option("--ratios", opt.ratios, "ratio grid start:stop:step (default 0.1:0.9:0.1)");
  sens->add_option("--layer", opt.layer, "sweep only this layer");
  sens->add_option("--out", opt.out, "output CSV path")->required();
  sens->add_option("--json", opt.json_out, "also write the map as JSON");

  CLI::App* prune = app.add_subcommand(
      "prune", "structurally remove low-importance filters and write the pruned model");
  add_model(prune);
  add_dataset(prune, false);
  add_method(prune);
  auto* sens_opt = prune->add_option("--sensitivity", opt.sensitivity,
                                     "sensitivity CSV/JSON to derive per-layer ratios from")
                       ->check(CLI::ExistingFile);
  auto* thresh_opt =
      prune->add_option("--threshold", opt.threshold,
                        "accuracy threshold selecting each layer's largest safe ratio")
          ->check(CLI::Range(1e-9, 1.0));
  auto* ratios_opt = prune->add_option(
      "--ratios", opt.ratios, "explicit ratios: one fraction for all layers or name=r,name=r,...");
  sens_opt->needs(thresh_opt);
  thresh_opt->needs(sens_opt);
  ratios_opt->excludes(sens_opt);
  prune->add_option("--rankings", opt.rankings, "reuse a rankings JSON instead of recomputing")
      ->check(CLI::ExistingFile);
  prune->add_option("--out", opt.out, "output manifest path (.pkm)")->required();
  prune->add_option("--plan", opt.plan_out, "also write the pruning plan as JSON");
  prune->add_option("--report", opt.report_out, "also write the reduction report as JSON");

  CLI::App* eval = app.add_subcommand("eval", "print dataset accuracy");
  add_model(eval);
  add_dataset(eval, true);

  CLI::App* report = app.add_subcommand("report", "compare two models (params/FLOPs/accuracy)");
  add_model(report);
  report->add_option("--pruned", opt.other, "model to compare against --model")
      ->required()
      ->check(CLI::ExistingFile);
  add_dataset(report, false);
  report->add_option("--json", opt.json_out, "also write the report as JSON");

  CLI::App* signs = app.add_subcommand(
      "signs", "write per-filter positive/negative weight statistics as JSON");
  add_model(signs);
  signs->add_option("--out", opt.out, "output JSON path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (rank->parsed()) return run_rank(opt);
    if (sens->parsed()) return run_sensitivity(opt);
    if (prune->parsed()) {
      if (opt.sensitivity.empty() && opt.ratios.empty()) {
        std::cerr << "prune needs either --sensitivity with --threshold or --ratios\n\n"
                  << prune->help();
        return 2;
      }
      return run_prune(opt);
    }
    if (eval->parsed()) return run_eval(opt);
    if (report->parsed()) return run_report(opt);
    if (signs->parsed()) return run_signs(opt);
  } catch (const Error& e) {
    std::cerr << "error: code=" << error_code_name(e.code()) << " message=\"" << e.message()
              << "\"\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: code=Internal message=\"" << e.what() << "\"\n";
    return 1;
  }
  return 0;
}
