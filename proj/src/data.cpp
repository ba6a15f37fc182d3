#include "vadvae/data.hpp"

#include "vadvae/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace vadvae {

std::size_t count_utterances(const Corpus& corpus) {
  std::size_t n = 0;
  for (const auto& d : corpus) n += d.utterances.size();
  return n;
}

namespace {

void check_unit(const Vad& v, const std::string& what) {
  for (double x : {v.valence, v.arousal, v.dominance}) {
    if (!(x >= 0.0 && x <= 1.0)) throw DataError(what + ": VAD value outside [0,1]");
  }
}

std::string format_value(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", x);
  if (std::strtod(buf, nullptr) != x) std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace

VadLexicon::VadLexicon(std::vector<std::string> labels, std::vector<Vad> values)
    : labels_(std::move(labels)), values_(std::move(values)) {
  if (labels_.size() != values_.size()) throw SchemaError("lexicon: label/value count mismatch");
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    check_unit(values_[i], "lexicon entry " + labels_[i]);
    if (!index_.emplace(labels_[i], static_cast<int>(i)).second) {
      throw SchemaError("lexicon: duplicate label " + labels_[i]);
    }
  }
}

VadLexicon VadLexicon::builtin(std::string_view dataset) {
  // NRC-VAD entries for each dataset's label set.
  if (dataset == "iemocap") {
    return VadLexicon({"neutral", "frustrated", "sad", "anger", "excited", "happy"},
                      {{0.469, 0.184, 0.357},
                       {0.060, 0.730, 0.280},
                       {0.052, 0.288, 0.164},
                       {0.167, 0.865, 0.657},
                       {0.908, 0.931, 0.709},
                       {0.960, 0.732, 0.850}});
  }
  if (dataset == "meld") {
    return VadLexicon({"neutral", "joy", "surprise", "anger", "sad", "disgust", "fear"},
                      {{0.469, 0.184, 0.357},
                       {0.980, 0.824, 0.794},
                       {0.875, 0.875, 0.562},
                       {0.167, 0.865, 0.657},
                       {0.052, 0.288, 0.164},
                       {0.052, 0.775, 0.317},
                       {0.073, 0.840, 0.293}});
  }
  if (dataset == "dailydialog") {
    return VadLexicon({"neutral", "anger", "disgust", "fear", "happy", "sad", "surprise"},
                      {{0.469, 0.184, 0.357},
                       {0.167, 0.865, 0.657},
                       {0.052, 0.775, 0.317},
                       {0.073, 0.840, 0.293},
                       {0.960, 0.732, 0.850},
                       {0.052, 0.288, 0.164},
                       {0.875, 0.875, 0.562}});
  }
  throw UsageError("unknown built-in lexicon '" + std::string(dataset) +
                   "' (expected iemocap, meld or dailydialog)");
}

VadLexicon VadLexicon::load_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open lexicon " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("label\tvalence\tarousal\tdominance", 0) != 0) {
    throw SchemaError(path.string() + ": missing header label\\tvalence\\tarousal\\tdominance");
  }
  std::vector<std::string> labels;
  std::vector<Vad> values;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string label, v, a, d;
    if (!std::getline(fields, label, '\t') || !std::getline(fields, v, '\t') ||
        !std::getline(fields, a, '\t') || !std::getline(fields, d, '\t')) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 4 fields");
    }
    try {
      values.push_back({std::stod(v), std::stod(a), std::stod(d)});
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad number");
    }
    labels.push_back(label);
  }
  return VadLexicon(std::move(labels), std::move(values));
}

void VadLexicon::save_tsv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw FileError("cannot write lexicon " + path.string());
  out << "label\tvalence\tarousal\tdominance\n";
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    out << labels_[i] << '\t' << format_value(values_[i].valence) << '\t'
        << format_value(values_[i].arousal) << '\t' << format_value(values_[i].dominance) << '\n';
  }
}

int VadLexicon::label_index(const std::string& label) const {
  auto it = index_.find(label);
  if (it == index_.end()) throw SchemaError("emotion '" + label + "' not in lexicon");
  return it->second;
}

const Vad& VadLexicon::at(const std::string& label) const { return at(label_index(label)); }

nlohmann::json VadLexicon::to_json() const {
  auto rows = nlohmann::json::array();
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    rows.push_back({labels_[i], values_[i].valence, values_[i].arousal, values_[i].dominance});
  }
  return rows;
}

VadLexicon VadLexicon::from_json(const nlohmann::json& j) {
  std::vector<std::string> labels;
  std::vector<Vad> values;
  for (const auto& row : j) {
    labels.push_back(row.at(0).get<std::string>());
    values.push_back({row.at(1).get<double>(), row.at(2).get<double>(), row.at(3).get<double>()});
  }
  return VadLexicon(std::move(labels), std::move(values));
}

Vad lexicon_targets(const VadLexicon& lexicon, const std::string& emotion) {
  return lexicon.at(emotion);
}

Vad lexicon_targets(const VadLexicon& lexicon, const Utterance& utterance) {
  if (utterance.vad_override) return *utterance.vad_override;
  return lexicon.at(utterance.emotion);
}

Vad rescale_likert5(const Vad& raw) {
  return {(raw.valence - 1.0) / 4.0, (raw.arousal - 1.0) / 4.0, (raw.dominance - 1.0) / 4.0};
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

namespace {

Vad parse_vad(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw DataError(where + ": vad must be [v, a, d]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

std::string join(const std::vector<std::string>& tokens) {
  std::string s;
  for (const auto& t : tokens) {
    if (!s.empty()) s.push_back(' ');
    s += t;
  }
  return s;
}

}  // namespace

Corpus parse_corpus(std::istream& in, const std::vector<std::string>& labels) {
  Corpus corpus;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "line " + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": malformed JSON (" + e.what() + ")");
    }
    try {
      Dialogue d;
      d.id = j.at("id").get<std::string>();
      for (const auto& u : j.at("utterances")) {
        Utterance utt;
        utt.speaker = u.at("speaker").get<std::string>();
        utt.tokens = tokenize(u.at("text").get<std::string>());
        utt.emotion = u.at("emotion").get<std::string>();
        if (std::find(labels.begin(), labels.end(), utt.emotion) == labels.end()) {
          throw SchemaError(where + ": unknown emotion '" + utt.emotion + "'");
        }
        if (utt.tokens.empty()) throw DataError(where + ": utterance with no tokens");
        if (u.contains("vad")) {
          utt.vad_override = parse_vad(u["vad"], where);
        } else if (u.contains("vad_raw")) {
          utt.vad_override = rescale_likert5(parse_vad(u["vad_raw"], where));
        }
        if (utt.vad_override) check_unit(*utt.vad_override, where);
        d.utterances.push_back(std::move(utt));
      }
      if (d.utterances.empty()) throw DataError(where + ": dialogue with no utterances");
      corpus.push_back(std::move(d));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, const std::vector<std::string>& labels) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open corpus " + path.string());
  try {
    return parse_corpus(in, labels);
  } catch (const SchemaError& e) {
    throw SchemaError(path.string() + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void save_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  std::ofstream out(path);
  if (!out) throw FileError("cannot write corpus " + path.string());
  for (const auto& d : corpus) {
    nlohmann::json j;
    j["id"] = d.id;
    j["utterances"] = nlohmann::json::array();
    for (const auto& u : d.utterances) {
      nlohmann::json ju = {{"speaker", u.speaker}, {"text", join(u.tokens)}, {"emotion", u.emotion}};
      if (u.vad_override) {
        ju["vad"] = {u.vad_override->valence, u.vad_override->arousal, u.vad_override->dominance};
      }
      j["utterances"].push_back(std::move(ju));
    }
    out << j.dump() << '\n';
  }
}

Tokenizer Tokenizer::build(const Corpus& corpus, std::size_t min_freq) {
  std::map<std::string, std::size_t> counts;
  std::vector<std::string> speakers;
  for (const auto& d : corpus) {
    for (const auto& u : d.utterances) {
      speakers.push_back(u.speaker);
      for (const auto& t : u.tokens) ++counts[t];
    }
  }
  std::sort(speakers.begin(), speakers.end());
  speakers.erase(std::unique(speakers.begin(), speakers.end()), speakers.end());

  std::vector<std::pair<std::string, std::size_t>> words(counts.begin(), counts.end());
  std::stable_sort(words.begin(), words.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  Tokenizer tok;
  tok.vocab_ = {"<cls>", "<sep>", "<eos>", "<unk>"};
  for (const auto& s : speakers) tok.vocab_.push_back("<spk:" + s + ">");
  for (const auto& [w, c] : words) {
    if (c >= min_freq) tok.vocab_.push_back(w);
  }
  tok.index();
  return tok;
}

void Tokenizer::index() {
  lookup_.clear();
  for (std::size_t i = 0; i < vocab_.size(); ++i) lookup_[vocab_[i]] = static_cast<int>(i);
}

int Tokenizer::id(const std::string& word) const {
  auto it = lookup_.find(word);
  return it == lookup_.end() ? kUnk : it->second;
}

int Tokenizer::speaker_id(const std::string& speaker) const { return id("<spk:" + speaker + ">"); }

std::vector<std::string> Tokenizer::decode(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

nlohmann::json Tokenizer::to_json() const { return vocab_; }

Tokenizer Tokenizer::from_json(const nlohmann::json& j) {
  Tokenizer tok;
  tok.vocab_ = j.get<std::vector<std::string>>();
  if (tok.vocab_.size() < 4 || tok.vocab_[0] != "<cls>" || tok.vocab_[3] != "<unk>") {
    throw SchemaError("tokenizer: reserved tokens missing");
  }
  tok.index();
  return tok;
}

ModelInput assemble_input(const Dialogue& dialogue, std::size_t target_index, ContextWindow window,
                          const Tokenizer& tokenizer, const VadLexicon& lexicon,
                          std::size_t max_len) {
  const std::size_t n = dialogue.utterances.size();
  if (target_index >= n) {
    throw UsageError("assemble_input: target " + std::to_string(target_index) +
                     " outside dialogue of " + std::to_string(n));
  }
  if ((window.past < 0 && window.past != kWholeDialogue) ||
      (window.future < 0 && window.future != kWholeDialogue)) {
    throw UsageError("assemble_input: negative context window");
  }
  auto encode = [&](const Utterance& u) {
    std::vector<int> ids{tokenizer.speaker_id(u.speaker)};
    for (const auto& t : u.tokens) ids.push_back(tokenizer.id(t));
    return ids;
  };

  const std::size_t past = window.past == kWholeDialogue ? target_index
                                                         : std::min<std::size_t>(window.past, target_index);
  const std::size_t future = window.future == kWholeDialogue
                                 ? n - 1 - target_index
                                 : std::min<std::size_t>(window.future, n - 1 - target_index);
  std::size_t first = target_index - past;
  std::size_t last = target_index + future;

  const Utterance& target = dialogue.utterances[target_index];
  const std::vector<int> target_ids = encode(target);
  auto length = [&](std::size_t lo, std::size_t hi) {
    std::size_t len = 4 + target_ids.size();
    for (std::size_t j = lo; j <= hi; ++j) {
      if (j != target_index) len += 1 + dialogue.utterances[j].tokens.size();
    }
    return len;
  };
  if (4 + target_ids.size() > max_len) {
    throw DataError("assemble_input: target utterance of " + dialogue.id + " exceeds max length " +
                    std::to_string(max_len));
  }
  // Drop the utterance farthest from the target until it fits; past first on ties.
  while (length(first, last) > max_len) {
    const std::size_t dist_past = target_index - first;
    const std::size_t dist_future = last - target_index;
    if (dist_past >= dist_future && dist_past > 0) {
      ++first;
    } else {
      --last;
    }
  }

  ModelInput in;
  in.utterance_id = dialogue.id + "#" + std::to_string(target_index);
  in.ids.push_back(Tokenizer::kCls);
  for (std::size_t j = first; j < target_index; ++j) {
    auto ids = encode(dialogue.utterances[j]);
    in.ids.insert(in.ids.end(), ids.begin(), ids.end());
  }
  in.ids.push_back(Tokenizer::kSep);
  in.target_begin = in.ids.size();
  in.ids.insert(in.ids.end(), target_ids.begin(), target_ids.end());
  in.target_end = in.ids.size();
  in.ids.push_back(Tokenizer::kSep);
  for (std::size_t j = target_index + 1; j <= last; ++j) {
    auto ids = encode(dialogue.utterances[j]);
    in.ids.insert(in.ids.end(), ids.begin(), ids.end());
  }
  in.ids.push_back(Tokenizer::kEos);

  in.gold.push_back(Tokenizer::kCls);
  in.gold.insert(in.gold.end(), target_ids.begin() + 1, target_ids.end());
  in.gold.push_back(Tokenizer::kEos);
  in.label = lexicon.label_index(target.emotion);
  in.vad = lexicon_targets(lexicon, target);
  return in;
}

std::vector<ModelInput> assemble_all(const Corpus& corpus, ContextWindow window,
                                     const Tokenizer& tokenizer, const VadLexicon& lexicon,
                                     std::size_t max_len) {
  std::vector<ModelInput> out;
  out.reserve(count_utterances(corpus));
  for (const auto& d : corpus) {
    for (std::size_t i = 0; i < d.utterances.size(); ++i) {
      out.push_back(assemble_input(d, i, window, tokenizer, lexicon, max_len));
    }
  }
  return out;
}

namespace {

const std::map<std::string, std::vector<std::string>>& marker_banks() {
  static const std::map<std::string, std::vector<std::string>> banks = {
      {"neutral", {"okay", "fine", "maybe", "sure", "alright", "normal", "usual", "anyway"}},
      {"sad", {"sorry", "miss", "lonely", "cry", "lost", "tears", "gloomy", "hurts"}},
      {"anger", {"furious", "hate", "angry", "stupid", "damn", "outraged", "mad", "yell"}},
      {"happy", {"glad", "lovely", "smile", "nice", "sweet", "cheerful", "pleased", "delighted"}},
      {"joy", {"glad", "lovely", "smile", "nice", "sweet", "cheerful", "pleased", "delighted"}},
      {"frustrated", {"ugh", "again", "stuck", "annoying", "tired", "useless", "whatever", "broken"}},
      {"excited", {"wow", "amazing", "awesome", "thrilled", "incredible", "fantastic", "yes", "finally"}},
      {"surprise", {"whoa", "really", "unexpected", "seriously", "shocked", "suddenly", "what", "unbelievable"}},
      {"disgust", {"gross", "eww", "nasty", "disgusting", "filthy", "yuck", "revolting", "vile"}},
      {"fear", {"scared", "afraid", "terrified", "nervous", "worried", "panic", "danger", "frightened"}},
  };
  return banks;
}

const std::vector<std::string> kTopics = {
    "house", "car", "dinner", "job", "money", "party", "school", "trip", "movie", "phone",
    "weekend", "family", "wedding", "doctor", "dog", "rent", "game", "office", "flight", "book",
    "garden", "kitchen", "coffee", "train", "beach", "concert", "exam", "boss", "gift", "hotel",
    "shop", "birthday", "letter", "computer", "bike", "lunch", "class", "friend", "city", "river"};

const std::vector<std::string> kFiller = {"i", "you", "the", "it", "is", "to", "that", "we",
                                          "this", "really", "just", "about", "so", "my", "and",
                                          "was", "with", "for", "your", "now"};

const std::vector<std::string> kSpeakers = {"alice", "bob", "carol", "dave", "erin", "frank",
                                            "grace", "heidi"};

std::vector<std::string> bank_for(const std::string& label) {
  auto it = marker_banks().find(label);
  if (it != marker_banks().end()) return it->second;
  std::vector<std::string> bank;
  for (int i = 0; i < 8; ++i) bank.push_back(label + "_" + std::to_string(i));
  return bank;
}

}  // namespace

Corpus generate_synthetic(const SyntheticOptions& options) {
  if (options.labels.empty()) throw UsageError("generate_synthetic: empty label set");
  if (options.min_turns < 1 || options.max_turns < options.min_turns) {
    throw UsageError("generate_synthetic: bad turn range");
  }
  std::mt19937_64 rng(options.seed);
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  auto chance = [&](double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; };

  std::vector<std::vector<std::string>> banks;
  for (const auto& l : options.labels) banks.push_back(bank_for(l));

  std::vector<std::size_t> turns(options.n_dialogues);
  std::size_t total = 0;
  for (auto& t : turns) {
    t = options.min_turns + pick(options.max_turns - options.min_turns + 1);
    total += t;
  }
  // Balanced label pool: counts differ by at most one.
  std::vector<std::size_t> pool(total);
  for (std::size_t i = 0; i < total; ++i) pool[i] = i % options.labels.size();
  std::shuffle(pool.begin(), pool.end(), rng);

  Corpus corpus;
  corpus.reserve(options.n_dialogues);
  std::size_t next_label = 0;
  for (std::size_t di = 0; di < options.n_dialogues; ++di) {
    Dialogue d;
    d.id = "syn" + std::to_string(di);
    const std::size_t s0 = pick(kSpeakers.size());
    std::size_t s1 = pick(kSpeakers.size() - 1);
    if (s1 >= s0) ++s1;
    std::string prev_topic = kTopics[pick(kTopics.size())];
    for (std::size_t t = 0; t < turns[di]; ++t) {
      const std::size_t label = pool[next_label++];
      Utterance u;
      u.speaker = kSpeakers[t % 2 == 0 ? s0 : s1];
      u.emotion = options.labels[label];
      const std::size_t markers = 1 + pick(3);
      for (std::size_t m = 0; m < markers; ++m) {
        std::size_t source = label;
        if (options.labels.size() > 1 && chance(options.marker_confusion)) {
          source = pick(options.labels.size() - 1);
          if (source >= label) ++source;
        }
        u.tokens.push_back(banks[source][pick(banks[source].size())]);
      }
      const std::string topic = kTopics[pick(kTopics.size())];
      u.tokens.push_back(prev_topic);
      u.tokens.push_back(topic);
      prev_topic = topic;
      const std::size_t fillers = 1 + pick(4);
      for (std::size_t f = 0; f < fillers; ++f) u.tokens.push_back(kFiller[pick(kFiller.size())]);
      std::shuffle(u.tokens.begin(), u.tokens.end(), rng);
      d.utterances.push_back(std::move(u));
    }
    corpus.push_back(std::move(d));
  }
  return corpus;
}

CorpusSplits split_corpus(const Corpus& corpus) {
  const std::size_t n = corpus.size();
  const std::size_t n_train = (n * 8) / 10;
  const std::size_t n_valid = (n - n_train) / 2;
  CorpusSplits s;
  s.train.assign(corpus.begin(), corpus.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.valid.assign(corpus.begin() + static_cast<std::ptrdiff_t>(n_train),
                 corpus.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid));
  s.test.assign(corpus.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid), corpus.end());
  return s;
}

Corpus inject_label_noise(const Corpus& corpus, double fraction,
                          const std::vector<std::string>& labels, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 0.5)) {
    throw UsageError("inject_label_noise: fraction must lie in [0, 0.5]");
  }
  if (labels.size() < 2 && fraction > 0.0) throw UsageError("inject_label_noise: need >= 2 labels");
  Corpus out = corpus;
  std::vector<Utterance*> all;
  for (auto& d : out) {
    for (auto& u : d.utterances) all.push_back(&u);
  }
  const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(all.size())));
  if (k == 0) return out;
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < k; ++i) {
    Utterance& u = *all[order[i]];
    const auto current = static_cast<std::size_t>(
        std::find(labels.begin(), labels.end(), u.emotion) - labels.begin());
    if (current == labels.size()) throw SchemaError("inject_label_noise: unknown label " + u.emotion);
    std::size_t replacement = std::uniform_int_distribution<std::size_t>(0, labels.size() - 2)(rng);
    if (replacement >= current) ++replacement;
    u.emotion = labels[replacement];
  }
  return out;
}

}  // namespace vadvae
