#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace vadvae {

struct Vad {
  double valence = 0.0;
  double arousal = 0.0;
  double dominance = 0.0;

  bool operator==(const Vad&) const = default;
};

struct Utterance {
  std::string speaker;
  std::vector<std::string> tokens;
  std::string emotion;
  std::optional<Vad> vad_override;

  bool operator==(const Utterance&) const = default;
};

struct Dialogue {
  std::string id;
  std::vector<Utterance> utterances;

  bool operator==(const Dialogue&) const = default;
};

using Corpus = std::vector<Dialogue>;

std::size_t count_utterances(const Corpus& corpus);

// Emotion label -> (v, a, d) in [0,1]^3. Label order is the class-index order.
class VadLexicon {
 public:
  VadLexicon() = default;
  VadLexicon(std::vector<std::string> labels, std::vector<Vad> values);

  // "iemocap", "meld" or "dailydialog".
  static VadLexicon builtin(std::string_view dataset);
  // Header `label\tvalence\tarousal\tdominance`, one row per label.
  static VadLexicon load_tsv(const std::filesystem::path& path);
  void save_tsv(const std::filesystem::path& path) const;

  const std::vector<std::string>& labels() const { return labels_; }
  std::size_t size() const { return labels_.size(); }
  bool contains(const std::string& label) const { return index_.count(label) != 0; }
  int label_index(const std::string& label) const;
  const Vad& at(const std::string& label) const;
  const Vad& at(int label_index) const { return values_.at(static_cast<std::size_t>(label_index)); }

  nlohmann::json to_json() const;
  static VadLexicon from_json(const nlohmann::json& j);

  bool operator==(const VadLexicon& other) const {
    return labels_ == other.labels_ && values_ == other.values_;
  }

 private:
  std::vector<std::string> labels_;
  std::vector<Vad> values_;
  std::map<std::string, int> index_;
};

// Supervision triple for an utterance: its own VAD when annotated, otherwise
// the lexicon entry of its emotion.
Vad lexicon_targets(const VadLexicon& lexicon, const Utterance& utterance);
Vad lexicon_targets(const VadLexicon& lexicon, const std::string& emotion);

// Human ratings on a 1..5 scale mapped affinely onto [0,1].
Vad rescale_likert5(const Vad& raw);

// One dialogue per line: {"id", "utterances": [{"speaker", "text", "emotion",
// optional "vad": [v,a,d] in [0,1] or "vad_raw": [v,a,d] in [1,5]}]}.
Corpus load_corpus(const std::filesystem::path& path, const std::vector<std::string>& labels);
Corpus parse_corpus(std::istream& in, const std::vector<std::string>& labels);
void save_corpus(const std::filesystem::path& path, const Corpus& corpus);

std::vector<std::string> tokenize(std::string_view text);

class Tokenizer {
 public:
  static constexpr int kCls = 0;
  static constexpr int kSep = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  // Lowercased whitespace tokens seen at least min_freq times, ordered by
  // frequency then lexicographically, after the reserved and speaker tokens.
  static Tokenizer build(const Corpus& corpus, std::size_t min_freq);

  int id(const std::string& word) const;
  int speaker_id(const std::string& speaker) const;
  const std::string& token(int id) const { return vocab_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return vocab_.size(); }
  std::vector<std::string> decode(const std::vector<int>& ids) const;

  nlohmann::json to_json() const;
  static Tokenizer from_json(const nlohmann::json& j);

  bool operator==(const Tokenizer& other) const { return vocab_ == other.vocab_; }

 private:
  void index();
  std::vector<std::string> vocab_;
  std::map<std::string, int> lookup_;
};

// Context window sizes; kWholeDialogue takes every available utterance.
inline constexpr int kWholeDialogue = -1;

struct ContextWindow {
  int past = 0;
  int future = 0;
};

struct ModelInput {
  std::string utterance_id;
  std::vector<int> ids;
  // [target_begin, target_end) covers the target's speaker token and words.
  std::size_t target_begin = 0;
  std::size_t target_end = 0;
  // <cls> target words <eos>
  std::vector<int> gold;
  int label = 0;
  Vad vad;
};

// <cls> past... <sep> target <sep> future... <eos>, every utterance prefixed by
// its speaker token. Context beyond max_len is dropped outermost first; the
// target is never shortened.
ModelInput assemble_input(const Dialogue& dialogue, std::size_t target_index, ContextWindow window,
                          const Tokenizer& tokenizer, const VadLexicon& lexicon,
                          std::size_t max_len);

std::vector<ModelInput> assemble_all(const Corpus& corpus, ContextWindow window,
                                     const Tokenizer& tokenizer, const VadLexicon& lexicon,
                                     std::size_t max_len);

struct SyntheticOptions {
  std::size_t n_dialogues = 100;
  std::vector<std::string> labels;
  std::uint64_t seed = 0;
  std::size_t min_turns = 5;
  std::size_t max_turns = 12;
  // Probability that an emotion marker is drawn from another label's bank.
  double marker_confusion = 0.0;
};

// Two-speaker templated dialogues. Each utterance carries 1-3 emotion markers,
// one topic word shared with the previous turn, a fresh topic word and filler.
Corpus generate_synthetic(const SyntheticOptions& options);

struct CorpusSplits {
  Corpus train;
  Corpus valid;
  Corpus test;
};

// Contiguous 80/10/10 split by dialogue.
CorpusSplits split_corpus(const Corpus& corpus);

// Replaces exactly round(fraction * N) labels with a different label drawn
// uniformly from the others.
Corpus inject_label_noise(const Corpus& corpus, double fraction,
                          const std::vector<std::string>& labels, std::uint64_t seed);

}  // namespace vadvae
