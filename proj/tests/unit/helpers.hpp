#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "textlrp/cnn.hpp"
#include "textlrp/corpus.hpp"
#include "textlrp/embeddings.hpp"
#include "textlrp/rng.hpp"

namespace testutil {

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("textlrp_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline textlrp::Document make_doc(std::string id, std::vector<std::string> tokens, std::optional<int> label = {},
                                  std::optional<int> predicted = {}, std::optional<double> score = {}) {
  textlrp::Document d;
  d.id = std::move(id);
  for (std::size_t i = 0; i < tokens.size(); ++i) d.raw_text += (i ? " " : "") + tokens[i];
  d.tokens = std::move(tokens);
  d.label = label;
  d.predicted_label = predicted;
  if (predicted && !score) score = *predicted == 1 ? 0.9 : 0.1;
  d.predicted_score = score;
  return d;
}

inline textlrp::EmbeddingTable make_table(std::size_t dim,
                                          const std::vector<std::pair<std::string, std::vector<double>>>& rows) {
  textlrp::EmbeddingTable t(dim);
  for (const auto& [tok, v] : rows) t.add(tok, v);
  return t;
}

// DocMatrix whose first `real` rows are tokens t0, t1, ...
inline textlrp::DocMatrix doc_matrix(const textlrp::Matrix& rows, std::size_t real) {
  textlrp::DocMatrix m;
  m.rows = rows;
  m.mask.assign(rows.rows, false);
  for (std::size_t i = 0; i < real; ++i) {
    m.mask[i] = true;
    m.token_index.push_back(i);
    m.tokens.push_back("t" + std::to_string(i));
  }
  return m;
}

// Random small network; weights and inputs in [-1, 1].
inline textlrp::CnnParams random_net(textlrp::Rng& rng, std::size_t L, std::size_t D,
                                     std::vector<std::size_t> sizes, std::size_t filters, bool zero_bias) {
  textlrp::CnnConfig c;
  c.dim = D;
  c.pad_length = L;
  c.filter_sizes = std::move(sizes);
  c.filters_per_size = filters;
  c.dropout_rate = 0.0;
  auto p = textlrp::CnnParams::initialize(c);
  for (auto& bank : p.convs) {
    for (auto& w : bank.weights.data) w = rng.uniform(-1, 1);
    for (auto& b : bank.biases) b = zero_bias ? 0.0 : rng.uniform(-0.3, 0.3);
  }
  for (auto& w : p.dense_weights.data) w = rng.uniform(-1, 1);
  for (auto& b : p.dense_biases) b = zero_bias ? 0.0 : rng.uniform(-0.3, 0.3);
  return p;
}

inline textlrp::Matrix random_input(textlrp::Rng& rng, std::size_t L, std::size_t D, std::size_t real) {
  textlrp::Matrix m(L, D);
  for (std::size_t r = 0; r < real; ++r) {
    for (std::size_t c = 0; c < D; ++c) m(r, c) = rng.uniform(-1, 1);
  }
  return m;
}

}  // namespace testutil
