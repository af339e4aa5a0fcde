// argmine: prepare / train / eval / predict for argument-structure parsing.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "argmine/config.hpp"
#include "argmine/corpus.hpp"
#include "argmine/error.hpp"
#include "argmine/graph_export.hpp"
#include "argmine/pipeline.hpp"

namespace fs = std::filesystem;
using namespace argmine;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string corpus;
  std::string out;
  std::vector<std::string> settings;  // key=value
  std::optional<double> threshold;
  std::string type_model, link_model;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "JSON config with flat dotted keys");
  cmd->add_option("--seed", o.seed, "Seed for every stochastic component (overrides config)");
  cmd->add_option("--corpus", o.corpus, "Normalized corpus JSONL (overrides paths.corpus)");
  cmd->add_option("--set", o.settings, "Override a config key, e.g. --set link.dropout=0.3");
}

RunConfig resolve_config(const CommonOptions& o) {
  RunConfig cfg = o.config_path.empty() ? RunConfig{} : load_run_config(o.config_path);
  for (const auto& kv : o.settings) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    const auto value = kv.substr(eq + 1);
    nlohmann::json v;
    try {
      v = nlohmann::json::parse(value);
    } catch (const nlohmann::json::exception&) {
      v = value;
    }
    set_config_value(cfg, kv.substr(0, eq), v);
  }
  if (o.seed) cfg.seed = *o.seed;
  if (!o.corpus.empty()) cfg.paths.corpus = o.corpus;
  cfg.propagate_seed();
  return cfg;
}

Corpus load_prepared(const RunConfig& cfg) {
  if (cfg.paths.corpus.empty()) throw ConfigError("no corpus given; pass --corpus or set paths.corpus");
  if (!fs::exists(cfg.paths.corpus))
    throw IoError("prepared corpus " + cfg.paths.corpus + " not found; run `argmine prepare` first");
  return read_jsonl(fs::path(cfg.paths.corpus));
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

int cmd_prepare(const std::string& corpus_dir, const std::string& out, bool verify) {
  Corpus corpus;
  const auto r = pipeline::prepare(corpus_dir, out, &corpus);
  std::cout << pipeline::format_stats(r);
  for (const auto& n : r.notes) spdlog::warn("note: {}", n);
  std::cout << "wrote " << corpus.comments.size() << " comments to " << out << '\n';
  if (verify && !r.mismatches.empty()) {
    for (const auto& m : r.mismatches) std::cerr << "count mismatch: " << m << '\n';
    return kExitValidation;
  }
  return kExitOk;
}

int cmd_train(const std::string& phase, const CommonOptions& o) {
  RunConfig cfg = resolve_config(o);
  if (!o.out.empty()) cfg.paths.artifacts = o.out;
  const Corpus corpus = load_prepared(cfg);
  fs::path dir;
  if (phase == "type")
    dir = pipeline::train_type_phase(cfg, corpus);
  else if (phase == "link")
    dir = pipeline::train_link_phase(cfg, corpus);
  else
    throw ValidationError("--phase must be 'type' or 'link'");
  std::cout << dir.string() << '\n';
  return kExitOk;
}

pipeline::LoadedPipeline load_models(const RunConfig& cfg, const CommonOptions& o) {
  const fs::path type_dir = o.type_model.empty() ? type_artifact_dir(cfg) : fs::path(o.type_model);
  const fs::path link_dir = o.link_model.empty() ? link_artifact_dir(cfg) : fs::path(o.link_model);
  return pipeline::load_pipeline(cfg, type_dir, link_dir);
}

int cmd_eval(const CommonOptions& o) {
  const RunConfig cfg = resolve_config(o);
  auto models = load_models(cfg, o);
  const Corpus gold = filter_split(load_prepared(cfg), Split::Test);
  const double threshold = o.threshold.value_or(models.links.threshold);
  const auto report = pipeline::evaluate(models, gold, threshold);
  const auto text = to_text(report);
  std::cout << text;
  const fs::path out = o.out.empty() ? (o.link_model.empty() ? link_artifact_dir(cfg) : fs::path(o.link_model)) /
                                           "eval_report.json"
                                     : fs::path(o.out);
  write_text(out, to_json(report).dump(2) + "\n");
  fs::path txt = out;
  txt.replace_extension(".txt");
  write_text(txt, text);
  return kExitOk;
}

int cmd_predict(const CommonOptions& o, const std::string& input, const std::string& format) {
  const RunConfig cfg = resolve_config(o);
  if (format != "json" && format != "dot") throw ValidationError("--format must be json or dot");
  auto models = load_models(cfg, o);
  const Corpus corpus = read_jsonl(fs::path(input), /*require_labels=*/false);
  const auto graphs = pipeline::predict(models, corpus, o.threshold.value_or(models.links.threshold));
  std::ostringstream os;
  if (format == "json")
    write_json(os, graphs);
  else
    write_dot(os, graphs);
  if (o.out.empty())
    std::cout << os.str();
  else
    write_text(o.out, os.str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_st("argmine"));
  spdlog::set_pattern("[%H:%M:%S] %v");

  CLI::App app{"Argument mining: proposition typing and non-tree link prediction"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off");

  std::string corpus_dir, prepare_out;
  bool no_verify = false;
  auto* prepare = app.add_subcommand("prepare", "Parse a CDCP release into normalized JSONL and verify split counts");
  prepare->add_option("--corpus", corpus_dir, "Release root containing train/ and test/")->required();
  prepare->add_option("--out", prepare_out, "Output JSONL path")->required();
  prepare->add_flag("--no-verify-counts", no_verify, "Do not fail when split counts differ from the CDCP release");

  CommonOptions train_opts;
  std::string phase;
  auto* train = app.add_subcommand("train", "Train phase 'type' (classifier) or 'link' (link head)");
  train->add_option("--phase", phase, "type or link")->required()->check(CLI::IsMember({"type", "link"}));
  add_common(train, train_opts);
  train->add_option("--out", train_opts.out, "Artifact root (overrides paths.artifacts)");

  CommonOptions eval_opts;
  auto* eval = app.add_subcommand("eval", "Evaluate both phases on the TEST split");
  add_common(eval, eval_opts);
  eval->add_option("--out", eval_opts.out, "Report JSON path (a .txt table is written beside it)");
  eval->add_option("--threshold", eval_opts.threshold, "Decision threshold (defaults to the dev-tuned value)");
  eval->add_option("--type-model", eval_opts.type_model, "Type artifact directory");
  eval->add_option("--link-model", eval_opts.link_model, "Link artifact directory");

  CommonOptions predict_opts;
  std::string input, format = "json";
  auto* predict = app.add_subcommand("predict", "Predict argument graphs for normalized JSONL input");
  add_common(predict, predict_opts);
  predict->add_option("--input", input, "Normalized JSONL; labels optional")->required();
  predict->add_option("--format", format, "json or dot")->check(CLI::IsMember({"json", "dot"}));
  predict->add_option("--out", predict_opts.out, "Output path (stdout when omitted)");
  predict->add_option("--threshold", predict_opts.threshold, "Decision threshold (defaults to the dev-tuned value)");
  predict->add_option("--type-model", predict_opts.type_model, "Type artifact directory");
  predict->add_option("--link-model", predict_opts.link_model, "Link artifact directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitValidation;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*prepare) return cmd_prepare(corpus_dir, prepare_out, !no_verify);
    if (*train) return cmd_train(phase, train_opts);
    if (*eval) return cmd_eval(eval_opts);
    if (*predict) return cmd_predict(predict_opts, input, format);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitOk;
}
