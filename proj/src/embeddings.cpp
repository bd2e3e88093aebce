#include "textlrp/embeddings.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "textlrp/error.hpp"
#include "textlrp/format.hpp"

namespace textlrp {

EmbeddingTable::EmbeddingTable(std::size_t dim) : dim_(dim), zero_(dim, 0.0) {
  if (dim == 0) throw ValidationError("embedding dimension must be positive");
}

bool EmbeddingTable::add(std::string token, std::span<const double> vector) {
  if (vector.size() != dim_) {
    throw Error("embedding for '" + token + "' has " + std::to_string(vector.size()) + " values, expected " +
                std::to_string(dim_));
  }
  if (index_.contains(token)) {
    ++duplicates_;
    return false;
  }
  index_.emplace(token, tokens_.size());
  tokens_.push_back(std::move(token));
  values_.insert(values_.end(), vector.begin(), vector.end());
  return true;
}

bool EmbeddingTable::contains(std::string_view token) const { return index_.contains(std::string(token)); }

std::span<const double> EmbeddingTable::lookup(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return zero_;
  return {values_.data() + it->second * dim_, dim_};
}

namespace {

std::vector<std::string_view> split_spaces(std::string_view line) {
  std::vector<std::string_view> parts;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) parts.push_back(line.substr(i, j - i));
    i = j;
  }
  return parts;
}

bool is_integer(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

}  // namespace

EmbeddingTable load_embeddings(const std::string& path, std::optional<std::size_t> expected_dim) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open embedding file " + path);
  std::optional<std::size_t> dim = expected_dim;
  EmbeddingTable table;
  bool initialized = false;
  std::string line;
  std::size_t line_no = 0;
  std::vector<double> values;
  while (std::getline(in, line)) {
    ++line_no;
    const auto parts = split_spaces(line);
    if (parts.empty()) continue;
    const std::string where = path + " line " + std::to_string(line_no);
    if (!initialized && parts.size() == 2 && is_integer(parts[0]) && is_integer(parts[1])) {
      const auto header_dim = static_cast<std::size_t>(parse_int(parts[1], where));
      if (dim && *dim != header_dim) {
        throw Error(where + ": header dimension " + std::to_string(header_dim) + " does not match expected " +
                    std::to_string(*dim));
      }
      dim = header_dim;
      table = EmbeddingTable(header_dim);
      initialized = true;
      continue;
    }
    const std::size_t width = parts.size() - 1;
    if (!initialized) {
      if (!dim) dim = width;
      if (*dim == 0) throw Error(where + ": entry has no vector values");
      table = EmbeddingTable(*dim);
      initialized = true;
    }
    if (width != table.dim()) {
      throw Error(where + ": vector has " + std::to_string(width) + " values, expected " + std::to_string(table.dim()));
    }
    values.resize(width);
    for (std::size_t k = 0; k < width; ++k) values[k] = parse_double(parts[k + 1], where);
    table.add(std::string(parts[0]), values);
  }
  if (!initialized || table.size() == 0) throw Error("embedding file " + path + " contains no vectors");
  return table;
}

void save_embeddings(const EmbeddingTable& table, const std::string& path, bool with_header) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  if (with_header) out << table.size() << ' ' << table.dim() << '\n';
  for (const auto& token : table.tokens()) {
    out << token;
    for (double v : table.lookup(token)) out << ' ' << format_double(v);
    out << '\n';
  }
}

std::vector<double> featurize_avg(std::span<const std::string> tokens, const EmbeddingTable& table,
                                  const FeaturizeOptions& options) {
  std::vector<double> sum(table.dim(), 0.0);
  std::size_t count = 0;
  for (const auto& token : tokens) {
    if (options.skip_oov && !table.contains(token)) continue;
    const auto v = table.lookup(token);
    for (std::size_t d = 0; d < sum.size(); ++d) sum[d] += v[d];
    ++count;
  }
  if (count == 0) return sum;
  const double inv = 1.0 / static_cast<double>(count);
  for (double& x : sum) x *= inv;
  return sum;
}

DocMatrix embed_pad(std::span<const std::string> tokens, const EmbeddingTable& table, std::size_t pad_length) {
  if (pad_length == 0) throw ValidationError("padding length must be at least 1");
  DocMatrix m;
  m.rows = Matrix(pad_length, table.dim());
  m.mask.assign(pad_length, false);
  const std::size_t real = std::min(tokens.size(), pad_length);
  m.truncated = tokens.size() - real;
  for (std::size_t r = 0; r < real; ++r) {
    const auto v = table.lookup(tokens[r]);
    std::copy(v.begin(), v.end(), m.rows.row(r).begin());
    m.mask[r] = true;
    m.token_index.push_back(r);
    m.tokens.push_back(tokens[r]);
  }
  return m;
}

OovReport oov_report(const Corpus& corpus, const EmbeddingTable& table) {
  OovReport report;
  std::map<std::string, std::size_t> counts;
  for (const auto& doc : corpus) {
    OovReport::DocEntry entry{doc.id, 0, doc.tokens.size(), 0.0};
    for (const auto& token : doc.tokens) {
      if (!table.contains(token)) {
        ++entry.oov_tokens;
        ++counts[token];
      }
    }
    entry.rate = entry.total_tokens == 0 ? 0.0
                                         : static_cast<double>(entry.oov_tokens) / static_cast<double>(entry.total_tokens);
    report.oov_tokens += entry.oov_tokens;
    report.total_tokens += entry.total_tokens;
    report.documents.push_back(std::move(entry));
  }
  report.oov_frequencies.assign(counts.begin(), counts.end());
  std::stable_sort(report.oov_frequencies.begin(), report.oov_frequencies.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return report;
}

}  // namespace textlrp
