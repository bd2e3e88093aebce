#include "textlrp/corpus.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "textlrp/csv.hpp"
#include "textlrp/error.hpp"
#include "textlrp/format.hpp"
#include "textlrp/rng.hpp"

namespace textlrp {

namespace {

bool is_token_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '\'';
}

void check_binary(int value, std::string_view what, std::string_view where) {
  if (value != 0 && value != 1) {
    throw Error(std::string(what) + " must be 0 or 1, got " + std::to_string(value) + " at " +
                std::string(where));
  }
}

}  // namespace

std::vector<std::string> tokenize(std::string_view raw_text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char raw : raw_text) {
    char c = raw;
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    if (is_token_char(c)) {
      current += c;
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

Corpus::Corpus(std::vector<Document> documents) : documents_(std::move(documents)) {
  index_.reserve(documents_.size());
  for (std::size_t i = 0; i < documents_.size(); ++i) {
    const Document& doc = documents_[i];
    if (!index_.emplace(doc.id, i).second) throw Error("duplicate document id '" + doc.id + "'");
    for (const auto& token : doc.tokens) {
      if (token.empty() || token.find_first_of(" \t\r\n") != std::string::npos) {
        throw Error("document '" + doc.id + "' has an empty or whitespace token");
      }
    }
    if (doc.predicted_label.has_value() != doc.predicted_score.has_value()) {
      throw Error("document '" + doc.id + "': predicted_score must accompany predicted_label");
    }
    if (doc.label) {
      check_binary(*doc.label, "label", doc.id);
      ++class_counts_[*doc.label];
    }
    if (doc.predicted_label) check_binary(*doc.predicted_label, "predicted_label", doc.id);
  }
}

const Document* Corpus::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &documents_[it->second];
}

Corpus Corpus::with_predictions(std::span<const int> labels, std::span<const double> scores) const {
  if (labels.size() != documents_.size() || scores.size() != documents_.size()) {
    throw Error("prediction count does not match corpus size");
  }
  std::vector<Document> docs = documents_;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    docs[i].predicted_label = labels[i];
    docs[i].predicted_score = scores[i];
  }
  return Corpus(std::move(docs));
}

Corpus merge(const Corpus& a, const Corpus& b) {
  std::vector<Document> docs = a.documents();
  docs.insert(docs.end(), b.begin(), b.end());
  return Corpus(std::move(docs));
}

Vocabulary Vocabulary::build(const Corpus& corpus) {
  Vocabulary vocab;
  for (const auto& doc : corpus) {
    for (const auto& token : doc.tokens) {
      auto [it, inserted] = vocab.ids_.emplace(token, vocab.tokens_.size());
      if (inserted) {
        vocab.tokens_.push_back(token);
        vocab.frequencies_.push_back(0);
      }
      ++vocab.frequencies_[it->second];
    }
  }
  return vocab;
}

std::optional<std::size_t> Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::size_t Vocabulary::frequency(std::string_view token) const {
  auto i = id(token);
  return i ? frequencies_[*i] : 0;
}

CorpusFormat corpus_format_from_path(const std::string& path) {
  const auto ext = std::filesystem::path(path).extension().string();
  if (ext == ".jsonl" || ext == ".json" || ext == ".ndjson") return CorpusFormat::jsonl;
  return CorpusFormat::csv;
}

namespace {

std::optional<int> resolve_label(std::optional<long long> label, std::optional<long long> stars,
                                 const LoadOptions& options, const std::string& where, bool& drop) {
  drop = false;
  if (options.star_labels) {
    if (!stars) throw Error("missing stars value at " + where);
    if (*stars < 1 || *stars > 5) {
      throw Error("stars must be in 1..5, got " + std::to_string(*stars) + " at " + where);
    }
    auto mapped = map_star_labels(static_cast<int>(*stars));
    if (!mapped) drop = true;
    return mapped;
  }
  if (!label) return std::nullopt;
  if (*label != 0 && *label != 1) {
    throw Error("label must be 0 or 1, got " + std::to_string(*label) + " at " + where);
  }
  return static_cast<int>(*label);
}

std::string default_id(const std::string& path, std::size_t row) {
  return std::filesystem::path(path).stem().string() + ":" + std::to_string(row);
}

Corpus load_csv(const std::string& path, const LoadOptions& options) {
  const auto records = csv::read_file(path);
  if (records.empty()) throw Error(path + ": missing CSV header");
  const auto& header = records.front().fields;
  auto column = [&](std::string_view name) -> std::optional<std::size_t> {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto id_col = column("id");
  const auto text_col = column("text");
  const auto label_col = column("label");
  const auto stars_col = column("stars");
  const auto pred_col = column("predicted_label");
  const auto score_col = column("predicted_score");
  if (!text_col) throw Error(path + ": CSV header has no 'text' column");
  if (options.star_labels && !stars_col) throw Error(path + ": CSV header has no 'stars' column");

  std::vector<Document> docs;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    const std::string where = path + " row " + std::to_string(r) + " (line " + std::to_string(rec.line) + ")";
    if (rec.fields.size() != header.size()) {
      throw Error("malformed record at " + where + ": expected " + std::to_string(header.size()) +
                  " fields, got " + std::to_string(rec.fields.size()));
    }
    auto optional_int = [&](std::optional<std::size_t> col, std::string_view what) -> std::optional<long long> {
      if (!col || rec.fields[*col].empty()) return std::nullopt;
      return parse_int(rec.fields[*col], std::string(what) + " at " + where);
    };
    bool drop = false;
    Document doc;
    doc.label = resolve_label(optional_int(label_col, "label"), optional_int(stars_col, "stars"), options, where, drop);
    if (drop) continue;
    doc.id = id_col && !rec.fields[*id_col].empty() ? rec.fields[*id_col] : default_id(path, r);
    doc.raw_text = rec.fields[*text_col];
    doc.tokens = tokenize(doc.raw_text);
    if (auto p = optional_int(pred_col, "predicted_label")) {
      if (*p != 0 && *p != 1) throw Error("predicted_label must be 0 or 1 at " + where);
      doc.predicted_label = static_cast<int>(*p);
    }
    if (score_col && !rec.fields[*score_col].empty()) {
      doc.predicted_score = parse_double(rec.fields[*score_col], "predicted_score at " + where);
    }
    docs.push_back(std::move(doc));
  }
  return Corpus(std::move(docs));
}

Corpus load_jsonl(const std::string& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::vector<Document> docs;
  std::string line;
  std::size_t line_no = 0;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++row;
    const std::string where = path + " line " + std::to_string(line_no);
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error("malformed JSON at " + where + ": " + e.what());
    }
    if (!obj.is_object()) throw Error("malformed record at " + where + ": expected an object");
    if (!obj.contains("text") || !obj["text"].is_string()) {
      throw Error("missing \"text\" field at " + where);
    }
    auto optional_int = [&](const char* key) -> std::optional<long long> {
      if (!obj.contains(key) || obj[key].is_null()) return std::nullopt;
      if (!obj[key].is_number_integer()) throw Error(std::string("field \"") + key + "\" must be an integer at " + where);
      return obj[key].get<long long>();
    };
    bool drop = false;
    Document doc;
    doc.label = resolve_label(optional_int("label"), optional_int("stars"), options, where, drop);
    if (drop) continue;
    if (obj.contains("id") && !obj["id"].is_null()) {
      doc.id = obj["id"].is_string() ? obj["id"].get<std::string>() : obj["id"].dump();
    } else {
      doc.id = default_id(path, row);
    }
    doc.raw_text = obj["text"].get<std::string>();
    doc.tokens = tokenize(doc.raw_text);
    if (auto p = optional_int("predicted_label")) {
      if (*p != 0 && *p != 1) throw Error("predicted_label must be 0 or 1 at " + where);
      doc.predicted_label = static_cast<int>(*p);
    }
    if (obj.contains("predicted_score") && !obj["predicted_score"].is_null()) {
      doc.predicted_score = obj["predicted_score"].get<double>();
    }
    docs.push_back(std::move(doc));
  }
  return Corpus(std::move(docs));
}

}  // namespace

Corpus load_corpus(const std::string& path, CorpusFormat format, const LoadOptions& options) {
  if (!std::filesystem::exists(path)) throw Error("corpus file not found: " + path);
  return format == CorpusFormat::csv ? load_csv(path, options) : load_jsonl(path, options);
}

void save_corpus(const Corpus& corpus, const std::string& path, CorpusFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  if (format == CorpusFormat::csv) {
    csv::write_row(out, {"id", "text", "label", "predicted_label", "predicted_score"});
    for (const auto& doc : corpus) {
      csv::write_row(out, {doc.id, doc.raw_text, doc.label ? std::to_string(*doc.label) : "",
                           doc.predicted_label ? std::to_string(*doc.predicted_label) : "",
                           doc.predicted_score ? format_double(*doc.predicted_score) : ""});
    }
    return;
  }
  for (const auto& doc : corpus) {
    nlohmann::ordered_json obj;
    obj["id"] = doc.id;
    obj["text"] = doc.raw_text;
    if (doc.label) obj["label"] = *doc.label;
    if (doc.predicted_label) obj["predicted_label"] = *doc.predicted_label;
    if (doc.predicted_score) obj["predicted_score"] = *doc.predicted_score;
    out << obj.dump() << '\n';
  }
}

Corpus stratified_sample(const Corpus& corpus, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ValidationError("sample size must be positive");
  std::map<int, std::vector<std::size_t>> by_class{{0, {}}, {1, {}}};
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& doc = corpus[i];
    if (!doc.label) throw ValidationError("stratified sampling needs labels; document '" + doc.id + "' has none");
    by_class[*doc.label].push_back(i);
  }
  if (n % by_class.size() != 0) {
    throw ValidationError("sample size " + std::to_string(n) + " is not divisible by the " +
                          std::to_string(by_class.size()) + " classes");
  }
  const std::size_t per_class = n / by_class.size();
  std::vector<std::size_t> chosen;
  chosen.reserve(n);
  for (auto& [label, members] : by_class) {
    if (members.size() < per_class) {
      throw ValidationError("class " + std::to_string(label) + " has " + std::to_string(members.size()) +
                            " documents, fewer than the " + std::to_string(per_class) + " required");
    }
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(label)));
    rng.shuffle(members);
    chosen.insert(chosen.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(per_class));
  }
  std::sort(chosen.begin(), chosen.end());
  std::vector<Document> docs;
  docs.reserve(n);
  for (auto i : chosen) docs.push_back(corpus[i]);
  return Corpus(std::move(docs));
}

std::optional<int> map_star_labels(int star) {
  switch (star) {
    case 1:
    case 2: return 1;
    case 3: return std::nullopt;
    case 4:
    case 5: return 0;
    default: throw ValidationError("star rating must be in 1..5, got " + std::to_string(star));
  }
}

}  // namespace textlrp
