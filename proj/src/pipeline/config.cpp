#include "blex/pipeline/config.hpp"

#include "blex/corpus/vocab.hpp"
#include "blex/error.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <vector>

namespace blex::pipeline {
namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ValidationError("config: " + key + ": cannot parse '" + text + "'");
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ValidationError("config: " + key + ": expected true or false, got '" + text + "'");
}

struct Binding {
  std::string key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

template <typename T>
Binding number(std::string key, T& field) {
  return {key, [&field, key](const std::string& v) { field = parse_number<T>(key, v); },
          [&field] {
            if constexpr (std::is_floating_point_v<T>) return io::format_double(field);
            else return std::to_string(field);
          }};
}

Binding flag(std::string key, bool& field) {
  return {key, [&field, key](const std::string& v) { field = parse_bool(key, v); },
          [&field] { return std::string(field ? "true" : "false"); }};
}

// Fixed order; the snapshot and the manifest follow it.
std::vector<Binding> bindings(RunConfig& c) {
  return {
      number("seed", c.seed),
      flag("synthetic", c.synthetic),
      number("synth.vocab_size", c.synth.vocab_size),
      number("synth.parallel_pairs", c.synth.parallel_pairs),
      number("synth.train", c.synth.train_triplets),
      number("synth.dev", c.synth.dev_triplets),
      number("synth.test", c.synth.test_triplets),
      number("synth.min_length", c.synth.min_length),
      number("synth.max_length", c.synth.max_length),
      number("synth.p_sub", c.synth.p_sub),
      number("synth.p_del", c.synth.p_del),
      number("synth.p_ins", c.synth.p_ins),
      {"tokenization",
       [&c](const std::string& v) {
         if (v == "word") c.tokenization = Tokenization::Word;
         else if (v == "bpe") c.tokenization = Tokenization::Bpe;
         else throw ValidationError("config: tokenization must be word or bpe, got '" + v + "'");
       },
       [&c] { return to_string(c.tokenization); }},
      number("bpe.merges", c.bpe_merges),
      flag("task.sentence", c.task_sentence),
      flag("task.word", c.task_word),
      flag("task.gap", c.task_gap),
      number("expert.d_model", c.expert.d_model),
      number("expert.layers", c.expert.n_layers),
      number("expert.d_ff", c.expert.d_ff),
      number("expert.heads", c.expert.n_heads),
      number("expert.sigma", c.expert.sigma),
      number("expert.kl_weight", c.expert.kl_weight),
      number("expert.max_length", c.expert.max_length),
      flag("expert.gap_head", c.expert.gap_head),
      number("expert.epochs", c.expert_epochs),
      number("expert.batch_size", c.expert_batch_size),
      number("expert.learning_rate", c.expert_learning_rate),
      number("expert.p_del", c.expert_p_del),
      number("expert.corpus_copies", c.corpus_copies),
      number("qe.hidden", c.qe.lstm_hidden),
      number("qe.layers", c.qe.layers),
      number("qe.lambda_sent", c.qe.lambda_sent),
      number("qe.lambda_word", c.qe.lambda_word),
      number("qe.lambda_gap", c.qe.lambda_gap),
      number("qe.epochs", c.qe.epochs),
      number("qe.learning_rate", c.qe.learning_rate),
      number("qe.batch_size", c.qe.batch_size),
      number("qe.clip_norm", c.qe.clip_norm),
      {"qe.features", [&c](const std::string& v) {
         try {
           c.features = parse_feature_set(v);
         } catch (const std::exception& e) {
           throw ValidationError(std::string("config: qe.features: ") + e.what());
         }
       },
       [&c] { return to_string(c.features); }},
      number("qe.ensemble", c.ensemble),
  };
}

}  // namespace

std::string to_string(Tokenization t) { return t == Tokenization::Word ? "word" : "bpe"; }

RunConfig::RunConfig() {
  // Desk-scale defaults.
  expert.d_model = 32;
  expert.d_ff = 128;
  expert.n_heads = 2;
  qe.lstm_hidden = 64;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "out") {
    out = value;
    return;
  }
  if (key == "data_dir") {
    data_dir = value;
    return;
  }
  if (key == "threads") {
    threads = parse_number<int>(key, value);
    return;
  }
  for (auto& b : bindings(*this))
    if (b.key == key) {
      b.set(value);
      return;
    }
  throw ValidationError("config: unknown key '" + key + "'");
}

void RunConfig::validate() const {
  if (threads < 1) throw ValidationError("config: threads must be >= 1");
  if (bpe_merges < 0) throw ValidationError("config: bpe.merges must be >= 0");
  if (!task_sentence && !task_word && !task_gap) throw ValidationError("config: every task is disabled");
  if (expert_epochs < 0 || expert_batch_size < 1) throw ValidationError("config: expert.epochs >= 0 and expert.batch_size >= 1 required");
  if (!(expert_learning_rate > 0)) throw ValidationError("config: expert.learning_rate must be positive");
  if (expert.gap_head && (expert_p_del < 0 || expert_p_del > 0.5))
    throw ValidationError("config: expert.p_del must lie in [0, 0.5]");
  if (corpus_copies < 0) throw ValidationError("config: expert.corpus_copies must be >= 0");
  if (ensemble < 1) throw ValidationError("config: qe.ensemble must be >= 1");
  if (synthetic) blex::validate(synth);
  ExpertConfig e = expert;
  e.source_vocab = e.target_vocab = Vocab::kReserved + 1;
  e.validate();
  qe.validate();
}

io::KeyValues RunConfig::snapshot() const {
  io::KeyValues kv;
  for (auto& b : bindings(const_cast<RunConfig&>(*this))) kv[b.key] = b.get();
  return kv;
}

io::KeyValues RunConfig::section(std::initializer_list<std::string_view> prefixes) const {
  io::KeyValues out;
  for (const auto& [k, v] : snapshot())
    for (auto p : prefixes)
      if (k.starts_with(p)) out[k] = v;
  return out;
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot open " + path.string());
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config: " + path.string() + ":" + std::to_string(number) + ": expected key=value");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    config.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  RunConfig c;
  apply_config_file(c, path);
  return c;
}

}  // namespace blex::pipeline
