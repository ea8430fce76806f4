#include "blex/error.hpp"
#include "blex/pipeline/stages.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>
#include <spdlog/spdlog.h>

#include <iostream>

using namespace blex;
using namespace blex::pipeline;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;

struct GlobalFlags {
  std::string config;
  std::vector<std::string> settings;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string out;
  bool force = false;
  bool quiet = false;
};

RunConfig resolve(const GlobalFlags& g) {
  RunConfig c;
  if (!g.config.empty()) apply_config_file(c, g.config);
  for (const auto& kv : g.settings) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + kv + "'");
    c.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (g.seed) c.seed = *g.seed;
  if (g.threads) c.threads = *g.threads;
  if (!g.out.empty()) c.out = g.out;
  c.validate();
  Eigen::setNbThreads(c.threads);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Translation quality estimation with a bilingual expert model"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags g;
  app.add_option("--config", g.config, "key=value configuration file")->check(CLI::ExistingFile);
  app.add_option("--set", g.settings, "Override one configuration key (key=value); repeatable");
  app.add_option("--seed", g.seed, "Seed for every stochastic component");
  app.add_option("--threads", g.threads, "Eigen thread count");
  app.add_option("--out", g.out, "Output directory");
  app.add_flag("--force", g.force, "Rerun stages even when their outputs are current");
  app.add_flag("-q,--quiet", g.quiet, "Only log warnings and errors");

  auto* synth = app.add_subcommand("synth", "Generate the synthetic corpus and its labels");
  auto* label = app.add_subcommand("label", "Derive HTER, word and gap tags from MT/post-edit files");
  auto* pretrain = app.add_subcommand("pretrain", "Train the bilingual expert model");
  auto* extract = app.add_subcommand("extract", "Extract QE features for every split");
  auto* train_qe_cmd = app.add_subcommand("train-qe", "Train the Bi-LSTM QE model(s) and tune thresholds");

  auto* predict = app.add_subcommand("predict", "Predict HTER and tags for source/MT files");
  std::string src, mt, output, reference;
  predict->add_option("--src", src, "Source sentences (default <data>/test.src)");
  predict->add_option("--mt", mt, "Machine translations (default <data>/test.mt)");
  predict->add_option("--output", output, "Output prefix (default <out>/predictions/test)");
  predict->add_option("--pe,--ref", reference, "Refused: prediction never reads references");

  auto* eval = app.add_subcommand("eval", "Score prediction files against gold labels");
  std::string pred_prefix, gold_prefix, report_prefix;
  eval->add_option("--pred", pred_prefix, "Prediction prefix (default <out>/predictions/test)");
  eval->add_option("--gold", gold_prefix, "Gold label prefix (default <data>/test)");
  eval->add_option("--report", report_prefix, "Report prefix (default <out>/reports/test)");

  auto* pipeline = app.add_subcommand("pipeline", "Run every stage and write the manifest");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }
  spdlog::set_level(g.quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    const RunConfig config = resolve(g);
    const Layout layout(config);
    const StageOptions options{g.force};
    if (synth->parsed()) cmd_synth(config, options);
    if (label->parsed()) cmd_label(config, options);
    if (pretrain->parsed()) cmd_pretrain(config, options);
    if (extract->parsed()) cmd_extract(config, options);
    if (train_qe_cmd->parsed()) cmd_train_qe(config, options);
    if (predict->parsed()) {
      if (!reference.empty())
        throw ValidationError("predict: references are never read at prediction time; drop --pe/--ref");
      cmd_predict(config, {src.empty() ? layout.corpus("test", "src") : std::filesystem::path(src),
                           mt.empty() ? layout.corpus("test", "mt") : std::filesystem::path(mt),
                           output.empty() ? layout.predictions("test") : std::filesystem::path(output)});
    }
    if (eval->parsed()) {
      const MetricReport report =
          cmd_eval(config, {pred_prefix.empty() ? layout.predictions("test") : std::filesystem::path(pred_prefix),
                            gold_prefix.empty() ? layout.data / "test" : std::filesystem::path(gold_prefix),
                            report_prefix.empty() ? layout.report("test") : std::filesystem::path(report_prefix)});
      std::cout << report.to_text();
    }
    if (pipeline->parsed()) std::cout << cmd_pipeline(config, options).report.to_text();
  } catch (const std::invalid_argument& e) {
    spdlog::error("{}", e.what());
    return kValidation;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kRuntime;
  }
  return kOk;
}
