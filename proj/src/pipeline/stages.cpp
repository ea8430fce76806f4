#include "blex/pipeline/stages.hpp"

#include "blex/corpus/bpe.hpp"
#include "blex/corpus/corpus.hpp"
#include "blex/error.hpp"
#include "blex/expert/trainer.hpp"
#include "blex/ter/labeler.hpp"

#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>

namespace blex::pipeline {

namespace fs = std::filesystem;

std::string sha1_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha1(), nullptr) != 1)
    throw std::runtime_error("sha1: digest failed");
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < length; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

std::string git_blob_sha1(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read " + path.string());
  const std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::string blob = "blob " + std::to_string(content.size());
  blob.push_back('\0');
  blob += content;
  return sha1_hex(blob);
}

Layout::Layout(const RunConfig& config) : out(config.out), data(config.data()) {}

std::string Layout::display(const fs::path& p) const {
  const auto rel = p.lexically_normal().lexically_relative(out.lexically_normal());
  if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
  return p.generic_string();
}

namespace {

using Clock = std::chrono::steady_clock;

// Re-raises with the stage name in front, keeping the validation/runtime split.
[[noreturn]] void rethrow_in_stage(const std::string& stage) {
  try {
    throw;
  } catch (const ValidationError& e) {
    throw ValidationError(stage + ": " + e.what());
  } catch (const DimensionError& e) {
    throw DimensionError(stage + ": " + e.what());
  } catch (const std::exception& e) {
    throw std::runtime_error(stage + ": " + e.what());
  }
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

StageRecord run_stage(const Layout& layout, const std::string& name, const std::vector<fs::path>& inputs,
                      const std::vector<fs::path>& outputs, const io::KeyValues& settings, bool force,
                      const std::function<void()>& body) {
  StageRecord record;
  record.name = name;
  try {
    std::string fingerprint = name + "\n";
    for (const auto& [k, v] : settings) fingerprint += k + "=" + v + "\n";
    for (const auto& p : inputs) {
      if (!fs::exists(p)) throw ValidationError("missing input " + p.string());
      record.inputs.emplace_back(layout.display(p), git_blob_sha1(p));
      fingerprint += record.inputs.back().first + " " + record.inputs.back().second + "\n";
    }
    const std::string stamp = sha1_hex(fingerprint);
    const bool current = !force && fs::exists(layout.stamp(name)) && read_text(layout.stamp(name)) == stamp + "\n" &&
                         std::all_of(outputs.begin(), outputs.end(), [](const fs::path& p) { return fs::exists(p); });
    if (current) {
      record.skipped = true;
      spdlog::info("{}: outputs are current, skipping", name);
    } else {
      spdlog::info("{}: running", name);
      fs::remove(layout.stamp(name));
      const auto start = Clock::now();
      body();
      record.seconds = std::chrono::duration<double>(Clock::now() - start).count();
      fs::create_directories(layout.stamp(name).parent_path());
      std::ofstream(layout.stamp(name)) << stamp << '\n';
      spdlog::info("{}: done in {:.1f} s", name, record.seconds);
    }
    for (const auto& p : outputs) {
      if (!fs::exists(p)) throw std::runtime_error("expected output " + p.string() + " was not written");
      record.outputs.emplace_back(layout.display(p), git_blob_sha1(p));
    }
  } catch (...) {
    rethrow_in_stage(name);
  }
  return record;
}

std::vector<std::string> splits_with(const Layout& layout, std::initializer_list<const char*> exts) {
  std::vector<std::string> found;
  for (const auto& split : kSplits)
    if (std::all_of(exts.begin(), exts.end(), [&](const char* e) { return fs::exists(layout.corpus(split, e)); }))
      found.push_back(split);
  return found;
}

std::vector<SentencePair> read_pairs(const fs::path& source, const fs::path& target) {
  const auto s = read_token_file(source), t = read_token_file(target);
  if (s.size() != t.size())
    throw DimensionError(source.string() + " has " + std::to_string(s.size()) + " lines but " + target.string() +
                         " has " + std::to_string(t.size()));
  return zip_pairs(s, t);
}

struct Segmenters {
  BpeMerges source, target;
};

std::optional<Segmenters> load_segmenters(const RunConfig& config, const Layout& layout) {
  if (config.tokenization != Tokenization::Bpe) return std::nullopt;
  return Segmenters{BpeMerges::load(layout.bpe_source()), BpeMerges::load(layout.bpe_target())};
}

// Subword view of word-level pairs; `segs` receives the target-side segmentations.
std::vector<SentencePair> to_units(const std::vector<SentencePair>& pairs, const Segmenters& bpe,
                                   std::vector<SegmentationMatrix>* segs) {
  std::vector<SentencePair> units;
  units.reserve(pairs.size());
  for (const auto& p : pairs) {
    auto target = apply_bpe(p.target, bpe.target);
    units.push_back({apply_bpe(p.source, bpe.source).units, std::move(target.units)});
    if (segs) segs->push_back(std::move(target.segmentation));
  }
  return units;
}

std::vector<FeatureRecord> features_for(const ExpertBundle& bundle, const std::optional<Segmenters>& bpe,
                                        const std::vector<SentencePair>& pairs, const std::string& checkpoint) {
  if (!bpe) return extract_dataset(bundle, pairs, checkpoint);
  std::vector<SegmentationMatrix> segs;
  const auto units = to_units(pairs, *bpe, &segs);
  return extract_dataset(bundle, units, checkpoint, &segs);
}

QeConfig effective_qe(const RunConfig& config, int member) {
  QeConfig q = config.qe;
  if (!config.task_sentence) q.lambda_sent = 0;
  if (!config.task_word) q.lambda_word = 0;
  if (!config.task_gap) q.lambda_gap = 0;
  q.seed = config.seed * 7919 + static_cast<std::uint64_t>(member);
  return q;
}

std::vector<fs::path> label_files(const RunConfig& config, const Layout& layout, const std::string& split) {
  std::vector<fs::path> files;
  if (config.task_sentence) files.push_back(layout.corpus(split, "hter"));
  if (config.task_word) files.push_back(layout.corpus(split, "tags"));
  if (config.task_gap) files.push_back(layout.corpus(split, "gap_tags"));
  return files;
}

// Features of `split` with labels for the enabled tasks; disabled tasks get
// placeholder labels of the right length.
QeTrainingData load_training_data(const RunConfig& config, const Layout& layout, const std::string& split) {
  const auto records = read_feature_file(layout.features(split));
  const std::size_t n = records.size();
  auto check = [&](std::size_t count, const fs::path& file) {
    if (count != n)
      throw DimensionError(file.string() + " has " + std::to_string(count) + " lines but " +
                           layout.features(split).string() + " has " + std::to_string(n) + " records");
  };
  std::vector<double> hter(n, 0.0);
  std::vector<TagSeq> word(n), gap(n);
  if (config.task_sentence) {
    hter = read_hter_file(layout.corpus(split, "hter"));
    check(hter.size(), layout.corpus(split, "hter"));
  }
  if (config.task_word) {
    word = read_tags_file(layout.corpus(split, "tags"));
    check(word.size(), layout.corpus(split, "tags"));
  }
  if (config.task_gap) {
    gap = read_tags_file(layout.corpus(split, "gap_tags"));
    check(gap.size(), layout.corpus(split, "gap_tags"));
  }
  QeTrainingData data;
  for (std::size_t i = 0; i < n; ++i) {
    const auto T = static_cast<std::size_t>(records[i].features.rows());
    if (!config.task_word) word[i].assign(T, Tag::Ok);
    if (!config.task_gap) gap[i].assign(T + 1, Tag::Ok);
    data.features.push_back(select_features(records[i].features, config.features));
    data.labels.push_back({hter[i], std::move(word[i]), std::move(gap[i])});
  }
  return data;
}

std::vector<QeModel> load_members(const RunConfig& config, const Layout& layout) {
  std::vector<QeModel> members;
  for (int i = 0; i < config.ensemble; ++i) members.push_back(QeModel::load(layout.qe_member(i)));
  return members;
}

}  // namespace

StageRecord cmd_synth(const RunConfig& config, const StageOptions& options) {
  config.validate();
  if (!config.synthetic) throw ValidationError("synth: synthetic=false in the configuration");
  const Layout layout(config);
  std::vector<fs::path> outputs{layout.corpus("parallel", "src"), layout.corpus("parallel", "tgt")};
  for (const auto& split : kSplits)
    for (const char* ext : {"src", "mt", "pe", "hter", "tags", "gap_tags"}) outputs.push_back(layout.corpus(split, ext));
  return run_stage(layout, "synth", {}, outputs, config.section({"seed", "synth."}), options.force, [&] {
    SyntheticConfig sc = config.synth;
    sc.seed = config.seed;
    const SyntheticTask task = generate_synthetic_task(sc);
    std::vector<TokenSeq> src, tgt;
    for (const auto& p : task.parallel) {
      src.push_back(p.source);
      tgt.push_back(p.target);
    }
    write_token_file(layout.corpus("parallel", "src"), src);
    write_token_file(layout.corpus("parallel", "tgt"), tgt);
    for (const auto& [split, rows] : {std::pair{"train", &task.train}, std::pair{"dev", &task.dev}, std::pair{"test", &task.test}}) {
      std::vector<TokenSeq> s, m, pe;
      std::vector<double> h;
      std::vector<TagSeq> w, g;
      for (const auto& ex : *rows) {
        s.push_back(ex.source);
        m.push_back(ex.mt);
        pe.push_back(ex.post_edit);
        h.push_back(ex.hter);
        w.push_back(ex.word_tags);
        g.push_back(ex.gap_tags);
      }
      write_token_file(layout.corpus(split, "src"), s);
      write_token_file(layout.corpus(split, "mt"), m);
      write_token_file(layout.corpus(split, "pe"), pe);
      write_hter_file(layout.corpus(split, "hter"), h);
      write_tags_file(layout.corpus(split, "tags"), w);
      write_tags_file(layout.corpus(split, "gap_tags"), g);
    }
  });
}

StageRecord cmd_label(const RunConfig& config, const StageOptions& options) {
  config.validate();
  const Layout layout(config);
  const auto splits = splits_with(layout, {"mt", "pe"});
  if (splits.empty()) throw ValidationError("label: no split in " + layout.data.string() + " has both .mt and .pe files");
  std::vector<fs::path> inputs, outputs;
  for (const auto& split : splits) {
    inputs.push_back(layout.corpus(split, "mt"));
    inputs.push_back(layout.corpus(split, "pe"));
    for (const char* ext : {"hter", "tags", "gap_tags"}) outputs.push_back(layout.corpus(split, ext));
  }
  return run_stage(layout, "label", inputs, outputs, {}, options.force, [&] {
    for (const auto& split : splits) {
      const auto pairs = read_pairs(layout.corpus(split, "mt"), layout.corpus(split, "pe"));
      std::vector<double> h;
      std::vector<TagSeq> w, g;
      for (const auto& p : pairs) {
        const auto l = ter::label(p.source, p.target);
        h.push_back(l.hter);
        w.push_back(l.word_tags);
        g.push_back(l.gap_tags);
      }
      write_hter_file(layout.corpus(split, "hter"), h);
      write_tags_file(layout.corpus(split, "tags"), w);
      write_tags_file(layout.corpus(split, "gap_tags"), g);
    }
  });
}

StageRecord cmd_pretrain(const RunConfig& config, const StageOptions& options) {
  config.validate();
  const Layout layout(config);
  const std::vector<fs::path> inputs{layout.corpus("parallel", "src"), layout.corpus("parallel", "tgt"),
                                     layout.corpus("train", "src"), layout.corpus("train", "pe")};
  std::vector<fs::path> outputs{layout.expert()};
  if (config.tokenization == Tokenization::Bpe) outputs.insert(outputs.begin(), {layout.bpe_source(), layout.bpe_target()});
  const auto settings = config.section({"seed", "tokenization", "bpe.", "expert."});
  return run_stage(layout, "pretrain", inputs, outputs, settings, options.force, [&] {
    const auto parallel = filter_corpus(read_pairs(inputs[0], inputs[1]));
    const auto qe_pairs = filter_corpus(read_pairs(inputs[2], inputs[3]));
    auto corpus = combine_training_corpus(parallel, qe_pairs, config.seed, config.corpus_copies);
    spdlog::info("pretrain: {} parallel + {} x {} QE pairs", parallel.size(), config.corpus_copies, qe_pairs.size());
    if (config.tokenization == Tokenization::Bpe) {
      std::vector<TokenSeq> src, tgt;
      for (const auto& p : corpus) {
        src.push_back(p.source);
        tgt.push_back(p.target);
      }
      const Segmenters bpe{learn_bpe(src, config.bpe_merges), learn_bpe(tgt, config.bpe_merges)};
      bpe.source.save(layout.bpe_source());
      bpe.target.save(layout.bpe_target());
      corpus = to_units(corpus, bpe, nullptr);
    }
    ExpertTrainOptions opts;
    opts.epochs = config.expert_epochs;
    opts.batch_size = config.expert_batch_size;
    opts.adam.learning_rate = config.expert_learning_rate;
    opts.seed = config.seed;
    opts.p_del = config.expert_p_del;
    opts.checkpoint_path = layout.expert();
    opts.on_epoch = [&](int epoch, double loss) { spdlog::info("pretrain: epoch {} mean loss {:.4f}", epoch, loss); };
    train_expert(corpus, config.expert, opts).save(layout.expert());
  });
}

StageRecord cmd_extract(const RunConfig& config, const StageOptions& options) {
  config.validate();
  const Layout layout(config);
  const auto splits = splits_with(layout, {"src", "mt"});
  if (splits.empty()) throw ValidationError("extract: no split in " + layout.data.string() + " has .src and .mt files");
  std::vector<fs::path> inputs{layout.expert()}, outputs;
  if (config.tokenization == Tokenization::Bpe) inputs.insert(inputs.end(), {layout.bpe_source(), layout.bpe_target()});
  for (const auto& split : splits) {
    inputs.push_back(layout.corpus(split, "src"));
    inputs.push_back(layout.corpus(split, "mt"));
    outputs.push_back(layout.features(split));
  }
  return run_stage(layout, "extract", inputs, outputs, config.section({"tokenization"}), options.force, [&] {
    const auto bundle = ExpertBundle::load(layout.expert());
    const auto bpe = load_segmenters(config, layout);
    for (const auto& split : splits) {
      const auto pairs = read_pairs(layout.corpus(split, "src"), layout.corpus(split, "mt"));
      write_feature_file(layout.features(split), features_for(bundle, bpe, pairs, layout.display(layout.expert())));
      spdlog::info("extract: {} sentences of {}", pairs.size(), split);
    }
  });
}

StageRecord cmd_train_qe(const RunConfig& config, const StageOptions& options) {
  config.validate();
  const Layout layout(config);
  const bool has_dev = fs::exists(layout.features("dev"));
  std::vector<fs::path> inputs{layout.features("train")}, outputs;
  for (const auto& f : label_files(config, layout, "train")) inputs.push_back(f);
  if (has_dev) {
    inputs.push_back(layout.features("dev"));
    for (const auto& f : label_files(config, layout, "dev")) inputs.push_back(f);
  }
  for (int i = 0; i < config.ensemble; ++i) outputs.push_back(layout.qe_member(i));
  const auto settings = config.section({"seed", "task.", "qe."});
  return run_stage(layout, "train-qe", inputs, outputs, settings, options.force, [&] {
    const auto train = load_training_data(config, layout, "train");
    std::vector<QeModel> members;
    for (int i = 0; i < config.ensemble; ++i) {
      members.push_back(train_qe(train, effective_qe(config, i), [&](int epoch, double loss) {
        spdlog::info("train-qe: member {} epoch {} mean loss {:.4f}", i, epoch, loss);
      }));
    }
    DecisionThreshold thresholds;
    if (has_dev) {
      const auto dev = load_training_data(config, layout, "dev");
      std::vector<std::vector<double>> word_p, gap_p;
      std::vector<TagSeq> word_gold, gap_gold;
      for (std::size_t i = 0; i < dev.features.size(); ++i) {
        const Prediction p = ensemble_predict(members, dev.features[i]);
        word_p.push_back(p.word_bad);
        gap_p.push_back(p.gap_bad);
        word_gold.push_back(dev.labels[i].word_tags);
        gap_gold.push_back(dev.labels[i].gap_tags);
      }
      if (config.task_word) thresholds.word = tune_threshold(word_p, word_gold);
      if (config.task_gap) thresholds.gap = tune_threshold(gap_p, gap_gold);
      spdlog::info("train-qe: thresholds word {:.2f} gap {:.2f}", thresholds.word, thresholds.gap);
    } else {
      spdlog::warn("train-qe: no development features; thresholds stay at 0.5");
    }
    for (int i = 0; i < config.ensemble; ++i) {
      members[static_cast<std::size_t>(i)].thresholds = thresholds;
      members[static_cast<std::size_t>(i)].save(layout.qe_member(i));
    }
  });
}

StageRecord cmd_predict(const RunConfig& config, const PredictRequest& request) {
  config.validate();
  const Layout layout(config);
  StageRecord record;
  record.name = "predict";
  try {
    std::vector<fs::path> inputs{layout.expert()};
    if (config.tokenization == Tokenization::Bpe) inputs.insert(inputs.end(), {layout.bpe_source(), layout.bpe_target()});
    for (int i = 0; i < config.ensemble; ++i) inputs.push_back(layout.qe_member(i));
    inputs.push_back(request.source);
    inputs.push_back(request.mt);
    for (const auto& p : inputs) {
      if (!fs::exists(p)) throw ValidationError("missing input " + p.string());
      record.inputs.emplace_back(layout.display(p), git_blob_sha1(p));
    }
    const auto start = Clock::now();
    const auto bundle = ExpertBundle::load(layout.expert());
    const auto bpe = load_segmenters(config, layout);
    const auto members = load_members(config, layout);
    const auto pairs = read_pairs(request.source, request.mt);
    const auto records = features_for(bundle, bpe, pairs, layout.display(layout.expert()));
    const DecisionThreshold theta = members.front().thresholds;
    std::vector<double> hter;
    std::vector<TagSeq> word, gap;
    for (const auto& r : records) {
      const Prediction p = ensemble_predict(members, select_features(r.features, config.features));
      hter.push_back(p.hter);
      word.push_back(tags_from_probabilities(p.word_bad, theta.word));
      gap.push_back(tags_from_probabilities(p.gap_bad, theta.gap));
    }
    const auto& prefix = request.output_prefix;
    std::vector<fs::path> outputs;
    if (config.task_sentence) {
      outputs.emplace_back(prefix.string() + ".hter");
      write_hter_file(outputs.back(), hter);
    }
    if (config.task_word) {
      outputs.emplace_back(prefix.string() + ".tags");
      write_tags_file(outputs.back(), word);
    }
    if (config.task_gap) {
      outputs.emplace_back(prefix.string() + ".gap_tags");
      write_tags_file(outputs.back(), gap);
    }
    record.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    for (const auto& p : outputs) record.outputs.emplace_back(layout.display(p), git_blob_sha1(p));
    spdlog::info("predict: {} sentences in {:.1f} s", pairs.size(), record.seconds);
  } catch (...) {
    rethrow_in_stage("predict");
  }
  return record;
}

MetricReport cmd_eval(const RunConfig& config, const EvalRequest& request, StageRecord* record) {
  config.validate();
  const Layout layout(config);
  MetricReport report;
  StageRecord local;
  local.name = "eval";
  try {
    auto file = [&](const fs::path& prefix, const char* ext) {
      fs::path p = prefix.string() + "." + ext;
      if (!fs::exists(p)) throw ValidationError("missing input " + p.string());
      local.inputs.emplace_back(layout.display(p), git_blob_sha1(p));
      return p;
    };
    if (config.task_sentence) {
      const auto pred = read_hter_file(file(request.predicted_prefix, "hter"));
      const auto gold = read_hter_file(file(request.gold_prefix, "hter"));
      if (pred.size() != gold.size())
        throw DimensionError("eval: " + std::to_string(pred.size()) + " predicted vs " + std::to_string(gold.size()) +
                             " gold HTER values");
      report.sentence = sentence_scores(pred, gold);
    }
    if (config.task_word)
      report.word = f1_scores(read_tags_file(file(request.predicted_prefix, "tags")),
                              read_tags_file(file(request.gold_prefix, "tags")));
    if (config.task_gap)
      report.gap = f1_scores(read_tags_file(file(request.predicted_prefix, "gap_tags")),
                             read_tags_file(file(request.gold_prefix, "gap_tags")));
    if (!request.report_prefix.empty()) {
      for (const auto& [ext, text] : {std::pair{".txt", report.to_text()}, std::pair{".kv", report.to_key_values()}}) {
        const fs::path p = request.report_prefix.string() + ext;
        fs::create_directories(p.parent_path());
        std::ofstream(p, std::ios::binary) << text;
        local.outputs.emplace_back(layout.display(p), git_blob_sha1(p));
      }
    }
  } catch (...) {
    rethrow_in_stage("eval");
  }
  if (record) *record = std::move(local);
  return report;
}

std::string Manifest::to_text() const {
  std::ostringstream out;
  out << "blexqe manifest\n[config]\n";
  for (const auto& [k, v] : config) out << k << '=' << v << '\n';
  char seconds[32];
  for (const auto& s : stages) {
    std::snprintf(seconds, sizeof seconds, "%.3f", s.seconds);
    out << "[stage " << s.name << "]\nstatus=" << (s.skipped ? "skipped" : "ran") << "\nseconds=" << seconds << '\n';
    for (const auto& [p, h] : s.inputs) out << "input " << p << ' ' << h << '\n';
    for (const auto& [p, h] : s.outputs) out << "output " << p << ' ' << h << '\n';
  }
  out << "[metrics test]\n" << report.to_key_values();
  return out.str();
}

Manifest cmd_pipeline(const RunConfig& config, const StageOptions& options) {
  config.validate();
  const Layout layout(config);
  Manifest manifest;
  manifest.config = config.snapshot();
  if (config.synthetic) manifest.stages.push_back(cmd_synth(config, options));
  if (!splits_with(layout, {"mt", "pe"}).empty()) manifest.stages.push_back(cmd_label(config, options));
  manifest.stages.push_back(cmd_pretrain(config, options));
  manifest.stages.push_back(cmd_extract(config, options));
  manifest.stages.push_back(cmd_train_qe(config, options));
  manifest.stages.push_back(cmd_predict(
      config, {layout.corpus("test", "src"), layout.corpus("test", "mt"), layout.predictions("test")}));
  StageRecord eval;
  manifest.report = cmd_eval(config, {layout.predictions("test"), layout.data / "test", layout.report("test")}, &eval);
  manifest.stages.push_back(std::move(eval));
  fs::create_directories(layout.out);
  std::ofstream(layout.manifest(), std::ios::binary) << manifest.to_text();
  spdlog::info("pipeline: manifest written to {}", layout.manifest().string());
  return manifest;
}

}  // namespace blex::pipeline
