#include "blex/corpus/corpus.hpp"
#include "blex/error.hpp"
#include "blex/pipeline/stages.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <iterator>

using namespace blex;
using namespace blex::pipeline;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("blex_pipeline_" + name);
  fs::remove_all(dir);
  return dir;
}

RunConfig tiny(const fs::path& out) {
  RunConfig c;
  c.out = out;
  for (const auto& [k, v] : std::vector<std::pair<std::string, std::string>>{
           {"synth.vocab_size", "16"}, {"synth.parallel_pairs", "120"}, {"synth.train", "30"},
           {"synth.dev", "12"}, {"synth.test", "12"}, {"synth.max_length", "6"},
           {"expert.d_model", "8"}, {"expert.d_ff", "16"}, {"expert.heads", "2"}, {"expert.epochs", "1"},
           {"expert.corpus_copies", "2"}, {"qe.hidden", "4"}, {"qe.epochs", "2"}})
    c.set(k, v);
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t line_count(const fs::path& p) { return read_token_file(p).size(); }

}  // namespace

TEST(RunConfig, KeysRoundTripThroughSnapshot) {
  RunConfig c;
  c.set("expert.d_model", "48");
  c.set("qe.features", "mm");
  c.set("tokenization", "bpe");
  c.set("task.gap", "false");
  const auto kv = c.snapshot();
  EXPECT_EQ(kv.at("expert.d_model"), "48");
  EXPECT_EQ(kv.at("qe.features"), "mm");
  EXPECT_EQ(kv.at("tokenization"), "bpe");
  EXPECT_EQ(kv.at("task.gap"), "false");
  RunConfig d;
  for (const auto& [k, v] : kv) d.set(k, v);
  EXPECT_EQ(d.snapshot(), kv);
  EXPECT_EQ(c.section({"qe."}).count("qe.features"), 1u);
  EXPECT_EQ(c.section({"qe."}).count("seed"), 0u);
}

TEST(RunConfig, RejectsBadInput) {
  RunConfig c;
  EXPECT_THROW(c.set("nope", "1"), ValidationError);
  EXPECT_THROW(c.set("seed", "x1"), ValidationError);
  EXPECT_THROW(c.set("task.word", "maybe"), ValidationError);
  EXPECT_THROW(c.set("qe.features", "everything"), ValidationError);
  c.set("qe.layers", "2");
  EXPECT_THROW(c.validate(), ValidationError);
  c = RunConfig();
  c.set("expert.heads", "5");
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(RunConfig, FileParsing) {
  const auto dir = fresh_dir("config");
  fs::create_directories(dir);
  const auto path = dir / "run.cfg";
  std::ofstream(path) << "# comment\n\n seed = 7 \nexpert.epochs=3\nout=" << (dir / "o").string() << "\n";
  const RunConfig c = load_run_config(path);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.expert_epochs, 3);
  EXPECT_EQ(c.out, dir / "o");
  EXPECT_EQ(c.data(), dir / "o" / "data");
  std::ofstream(path) << "seed 7\n";
  EXPECT_THROW(load_run_config(path), ValidationError);
}

TEST(Hash, GitBlobIds) {
  const auto dir = fresh_dir("hash");
  fs::create_directories(dir);
  std::ofstream(dir / "empty", std::ios::binary);
  std::ofstream(dir / "hello", std::ios::binary) << "hello\n";
  // Values printed by `git hash-object`.
  EXPECT_EQ(git_blob_sha1(dir / "empty"), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  EXPECT_EQ(git_blob_sha1(dir / "hello"), "ce013625030ba8dba906f756967f9e9ca394464a");
  EXPECT_EQ(sha1_hex("abc"), "a9993e364706816aba3e25717850c26c9cd0d89d");
}

TEST(Synth, ConsistentFilesAndDeterministic) {
  const auto a = fresh_dir("synth_a"), b = fresh_dir("synth_b");
  cmd_synth(tiny(a));
  cmd_synth(tiny(b));
  const Layout la(tiny(a));
  for (const auto& split : kSplits) {
    const std::size_t n = line_count(la.corpus(split, "src"));
    for (const char* ext : {"mt", "pe", "hter", "tags", "gap_tags"}) EXPECT_EQ(line_count(la.corpus(split, ext)), n);
    const auto mt = read_token_file(la.corpus(split, "mt"));
    const auto tags = read_tags_file(la.corpus(split, "tags"));
    const auto gaps = read_tags_file(la.corpus(split, "gap_tags"));
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_EQ(tags[i].size(), mt[i].size());
      EXPECT_EQ(gaps[i].size(), mt[i].size() + 1);
    }
  }
  for (const auto& entry : fs::directory_iterator(a / "data"))
    EXPECT_EQ(slurp(entry.path()), slurp(b / "data" / entry.path().filename())) << entry.path();
}

TEST(Synth, ZeroNoiseGivesZeroHter) {
  const auto dir = fresh_dir("synth_clean");
  RunConfig c = tiny(dir);
  c.set("synth.p_sub", "0");
  c.set("synth.p_del", "0");
  c.set("synth.p_ins", "0");
  cmd_synth(c);
  for (double h : read_hter_file(Layout(c).corpus("train", "hter"))) EXPECT_EQ(h, 0.0);
}

TEST(Label, ReproducesSynthLabels) {
  const auto dir = fresh_dir("label");
  const RunConfig c = tiny(dir);
  cmd_synth(c);
  const Layout l(c);
  const std::string tags = slurp(l.corpus("dev", "tags")), hter = slurp(l.corpus("dev", "hter"));
  fs::remove(l.corpus("dev", "tags"));
  fs::remove(l.corpus("dev", "hter"));
  cmd_label(c);
  EXPECT_EQ(slurp(l.corpus("dev", "tags")), tags);
  EXPECT_EQ(slurp(l.corpus("dev", "hter")), hter);
}

TEST(Pipeline, RunsResumesAndPredictsWithoutReferences) {
  const auto dir = fresh_dir("full");
  const RunConfig c = tiny(dir);
  const Manifest first = cmd_pipeline(c);
  const Layout l(c);
  ASSERT_TRUE(first.report.sentence && first.report.word && first.report.gap);
  EXPECT_EQ(first.report.sentence->count, 12u);
  for (const auto& s : first.stages) EXPECT_FALSE(s.skipped) << s.name;
  EXPECT_NE(slurp(l.manifest()).find("output model/expert.blex "), std::string::npos);

  // Rerun: every artifact is current, only predict and eval execute.
  const Manifest second = cmd_pipeline(c);
  for (const auto& s : second.stages) EXPECT_EQ(s.skipped, s.name != "predict" && s.name != "eval") << s.name;
  EXPECT_EQ(second.report.to_key_values(), first.report.to_key_values());

  // Changing a QE setting retrains the QE model but keeps the expert and features.
  RunConfig changed = c;
  changed.set("qe.epochs", "1");
  const Manifest third = cmd_pipeline(changed);
  for (const auto& s : third.stages)
    if (s.name == "pretrain" || s.name == "extract") EXPECT_TRUE(s.skipped) << s.name;
    else if (s.name == "train-qe") EXPECT_FALSE(s.skipped);
  cmd_train_qe(c);

  // Predictions do not depend on the post-edit file being present.
  const std::string before = slurp(l.predictions("test").string() + ".tags");
  fs::rename(l.corpus("test", "pe"), dir / "moved.pe");
  const auto record = cmd_predict(c, {l.corpus("test", "src"), l.corpus("test", "mt"), dir / "again"});
  EXPECT_EQ(slurp(dir / "again.tags"), before);
  EXPECT_EQ(line_count(dir / "again.hter"), 12u);
  for (const auto& [path, hash] : record.inputs) EXPECT_EQ(path.find(".pe"), std::string::npos) << path;
}

TEST(Pipeline, StageFailuresNameTheStage) {
  const auto dir = fresh_dir("missing");
  try {
    cmd_pretrain(tiny(dir));
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("pretrain: missing input", 0), 0u) << e.what();
  }
  const RunConfig c = tiny(dir);
  cmd_synth(c);
  std::ofstream(Layout(c).corpus("train", "pe"), std::ios::app) << "extra line\n";
  EXPECT_THROW(cmd_pretrain(c), DimensionError);
}
