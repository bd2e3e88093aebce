#include "textlrp/cnn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "textlrp/error.hpp"

namespace textlrp {

void CnnConfig::validate() const {
  if (dim == 0) throw ValidationError("cnn: dim must be positive");
  if (pad_length == 0) throw ValidationError("cnn: pad_length must be positive");
  if (filter_sizes.empty()) throw ValidationError("cnn: filter_sizes must not be empty");
  for (auto s : filter_sizes) {
    if (s < 1 || s > pad_length) {
      throw ValidationError("cnn: filter size " + std::to_string(s) + " outside 1.." + std::to_string(pad_length));
    }
  }
  if (filters_per_size == 0) throw ValidationError("cnn: filters_per_size must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ValidationError("cnn: dropout_rate must be in [0,1)");
  if (epochs < 1) throw ValidationError("cnn: epochs must be at least 1");
  if (batch_size == 0) throw ValidationError("cnn: batch_size must be positive");
  if (!(learning_rate > 0)) throw ValidationError("cnn: learning_rate must be positive");
}

CnnParams CnnParams::initialize(const CnnConfig& config) {
  config.validate();
  CnnParams params;
  params.config = config;
  Rng rng(derive_seed(config.seed, 0x21));
  const double filters = static_cast<double>(config.filters_per_size);
  const double dim = static_cast<double>(config.dim);
  for (auto s : config.filter_sizes) {
    ConvBank bank;
    bank.size = s;
    bank.weights = Matrix(config.filters_per_size, s * config.dim);
    bank.biases.assign(config.filters_per_size, 0.0);
    const double fan_in = static_cast<double>(s) * dim;
    const double fan_out = static_cast<double>(s) * filters;
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& w : bank.weights.data) w = rng.uniform(-limit, limit);
    params.convs.push_back(std::move(bank));
  }
  const std::size_t total = config.total_filters();
  params.dense_weights = Matrix(total, kNumClasses);
  const double limit = std::sqrt(6.0 / (static_cast<double>(total) + static_cast<double>(kNumClasses)));
  for (double& w : params.dense_weights.data) w = rng.uniform(-limit, limit);
  return params;
}

std::vector<double> make_dropout_mask(std::size_t n, double rate, Rng& rng) {
  std::vector<double> mask(n, 1.0);
  if (rate <= 0.0) return mask;
  const double keep = 1.0 / (1.0 - rate);
  for (double& m : mask) m = rng.uniform() < rate ? 0.0 : keep;
  return mask;
}

namespace {

double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

// One past the last row holding any nonzero value. Windows starting at or
// after this row see only zeros, so their pre-activation is the bias.
std::size_t effective_rows(const Matrix& input) {
  for (std::size_t r = input.rows; r > 0; --r) {
    const auto row = input.row(r - 1);
    if (std::any_of(row.begin(), row.end(), [](double v) { return v != 0.0; })) return r;
  }
  return 0;
}

void check_shape(const CnnParams& params, const Matrix& input) {
  if (input.rows != params.config.pad_length || input.cols != params.config.dim) {
    throw Error("cnn: input is " + std::to_string(input.rows) + "x" + std::to_string(input.cols) + ", expected " +
                std::to_string(params.config.pad_length) + "x" + std::to_string(params.config.dim));
  }
  if (params.convs.size() != params.config.filter_sizes.size()) throw Error("cnn: parameters do not match config");
}

// Convolution + ReLU + max pool for one bank. Ties resolve to the lowest position.
void pool_bank(const ConvBank& bank, const Matrix& input, std::size_t n_eff, Matrix* pre_out, double* max_out,
               std::size_t* argmax_out) {
  const std::size_t positions = input.rows - bank.size + 1;
  const std::size_t filters = bank.biases.size();
  const std::size_t width = bank.size * input.cols;
  std::fill(max_out, max_out + filters, -1.0);
  std::fill(argmax_out, argmax_out + filters, std::size_t{0});
  const std::size_t computed = std::min(positions, n_eff);
  for (std::size_t p = 0; p < computed; ++p) {
    const double* window = input.data.data() + p * input.cols;
    for (std::size_t f = 0; f < filters; ++f) {
      const double z = bank.biases[f] + dot(bank.weights.data.data() + f * width, window, width);
      if (pre_out) (*pre_out)(p, f) = z;
      const double a = z > 0.0 ? z : 0.0;
      if (a > max_out[f]) {
        max_out[f] = a;
        argmax_out[f] = p;
      }
    }
  }
  if (computed < positions) {
    for (std::size_t f = 0; f < filters; ++f) {
      const double z = bank.biases[f];
      if (pre_out) {
        for (std::size_t p = computed; p < positions; ++p) (*pre_out)(p, f) = z;
      }
      const double a = z > 0.0 ? z : 0.0;
      if (a > max_out[f]) {
        max_out[f] = a;
        argmax_out[f] = computed;
      }
    }
  }
}

struct Pooled {
  std::vector<double> values;
  std::vector<std::size_t> argmax;
};

Pooled forward_pooled(const CnnParams& params, const Matrix& input) {
  const std::size_t n_eff = effective_rows(input);
  Pooled out;
  const std::size_t total = params.total_filters();
  out.values.resize(total);
  out.argmax.resize(total);
  std::size_t offset = 0;
  for (const auto& bank : params.convs) {
    pool_bank(bank, input, n_eff, nullptr, out.values.data() + offset, out.argmax.data() + offset);
    offset += bank.biases.size();
  }
  return out;
}

std::array<double, kNumClasses> dense_forward(const CnnParams& params, const std::vector<double>& x,
                                              const std::vector<double>* mask) {
  std::array<double, kNumClasses> logits = params.dense_biases;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double v = mask ? x[k] * (*mask)[k] : x[k];
    if (v == 0.0) continue;
    for (std::size_t c = 0; c < kNumClasses; ++c) logits[c] += v * params.dense_weights(k, c);
  }
  return logits;
}

std::array<double, kNumClasses> softmax(const std::array<double, kNumClasses>& logits) {
  const double m = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - m);
  const double e1 = std::exp(logits[1] - m);
  return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

}  // namespace

ActivationCache cnn_forward(const CnnParams& params, const DocMatrix& matrix, bool train_mode,
                            const std::vector<double>* dropout_mask) {
  check_shape(params, matrix.rows);
  const std::size_t total = params.total_filters();
  if (train_mode && (!dropout_mask || dropout_mask->size() != total)) {
    throw Error("cnn: train-mode forward needs a dropout mask of length " + std::to_string(total));
  }
  ActivationCache cache;
  cache.input = matrix;
  cache.train_mode = train_mode;
  const std::size_t n_eff = effective_rows(matrix.rows);
  cache.pooled.reserve(total);
  for (const auto& bank : params.convs) {
    ConvActivation act;
    act.size = bank.size;
    const std::size_t positions = matrix.rows.rows - bank.size + 1;
    const std::size_t filters = bank.biases.size();
    act.pre = Matrix(positions, filters);
    act.max_value.resize(filters);
    act.argmax.resize(filters);
    pool_bank(bank, matrix.rows, n_eff, &act.pre, act.max_value.data(), act.argmax.data());
    act.post = act.pre;
    for (double& v : act.post.data) v = v > 0.0 ? v : 0.0;
    cache.pooled.insert(cache.pooled.end(), act.max_value.begin(), act.max_value.end());
    cache.convs.push_back(std::move(act));
  }
  if (train_mode) cache.dropout_mask = *dropout_mask;
  cache.logits = dense_forward(params, cache.pooled, train_mode ? dropout_mask : nullptr);
  return cache;
}

double cnn_score(const CnnParams& params, const Matrix& input, int target_class) {
  check_shape(params, input);
  const auto pooled = forward_pooled(params, input);
  return dense_forward(params, pooled.values, nullptr)[static_cast<std::size_t>(target_class)];
}

Matrix cnn_backward_gradients(const CnnParams& params, const ActivationCache& cache, int target_class) {
  check_shape(params, cache.input.rows);
  if (cache.train_mode) throw Error("cnn: gradients require an eval-mode activation cache");
  if (target_class < 0 || target_class > 1) throw ValidationError("target class must be 0 or 1");
  const Matrix& input = cache.input.rows;
  Matrix grad(input.rows, input.cols);
  std::size_t k = 0;
  for (std::size_t b = 0; b < params.convs.size(); ++b) {
    const auto& bank = params.convs[b];
    const auto& act = cache.convs[b];
    const std::size_t width = bank.size * input.cols;
    for (std::size_t f = 0; f < bank.biases.size(); ++f, ++k) {
      double g = params.dense_weights(k, static_cast<std::size_t>(target_class));
      if (!cache.dropout_mask.empty()) g *= cache.dropout_mask[k];
      const std::size_t p = act.argmax[f];
      if (g == 0.0 || !(act.pre(p, f) > 0.0)) continue;
      const double* w = bank.weights.data.data() + f * width;
      double* out = grad.data.data() + p * input.cols;
      for (std::size_t i = 0; i < width; ++i) out[i] += g * w[i];
    }
  }
  return grad;
}

Matrix cnn_input_gradient(const CnnParams& params, const Matrix& input, int target_class) {
  check_shape(params, input);
  if (target_class < 0 || target_class > 1) throw ValidationError("target class must be 0 or 1");
  const auto pooled = forward_pooled(params, input);
  Matrix grad(input.rows, input.cols);
  std::size_t k = 0;
  for (const auto& bank : params.convs) {
    const std::size_t width = bank.size * input.cols;
    for (std::size_t f = 0; f < bank.biases.size(); ++f, ++k) {
      const double g = params.dense_weights(k, static_cast<std::size_t>(target_class));
      // pooled > 0 exactly when the argmax pre-activation is positive
      if (g == 0.0 || !(pooled.values[k] > 0.0)) continue;
      const double* w = bank.weights.data.data() + f * width;
      double* out = grad.data.data() + pooled.argmax[k] * input.cols;
      for (std::size_t i = 0; i < width; ++i) out[i] += g * w[i];
    }
  }
  return grad;
}

CnnPrediction cnn_predict(const CnnParams& params, std::span<const std::string> tokens, const EmbeddingTable& table) {
  const auto m = embed_pad(tokens, table, params.config.pad_length);
  check_shape(params, m.rows);
  const auto pooled = forward_pooled(params, m.rows);
  const auto probs = softmax(dense_forward(params, pooled.values, nullptr));
  return {probs[1], probs[1] >= 0.5 ? 1 : 0};
}

CnnParams cnn_train(const CnnConfig& config, const Corpus& corpus, const EmbeddingTable& table, CnnTrainLog* log) {
  config.validate();
  if (config.dim != table.dim()) {
    throw ValidationError("cnn: config dim " + std::to_string(config.dim) + " differs from embedding dim " +
                          std::to_string(table.dim()));
  }
  if (corpus.empty()) throw ValidationError("cnn: empty training corpus");
  std::vector<int> targets;
  targets.reserve(corpus.size());
  for (const auto& doc : corpus) {
    if (!doc.predicted_label) throw ValidationError("cnn: document '" + doc.id + "' has no black-box predicted label");
    targets.push_back(*doc.predicted_label);
  }

  CnnParams params = CnnParams::initialize(config);
  Rng rng(derive_seed(config.seed, 0x22));
  const std::size_t total = params.total_filters();
  const std::size_t dim = config.dim;

  std::vector<Matrix> conv_grad;
  std::vector<std::vector<double>> bias_grad;
  for (const auto& bank : params.convs) {
    conv_grad.emplace_back(bank.weights.rows, bank.weights.cols);
    bias_grad.emplace_back(bank.biases.size(), 0.0);
  }
  Matrix dense_grad(total, kNumClasses);
  std::array<double, kNumClasses> dense_bias_grad{};

  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      for (auto& g : conv_grad) std::fill(g.data.begin(), g.data.end(), 0.0);
      for (auto& g : bias_grad) std::fill(g.begin(), g.end(), 0.0);
      std::fill(dense_grad.data.begin(), dense_grad.data.end(), 0.0);
      dense_bias_grad = {};

      for (std::size_t i = start; i < end; ++i) {
        const std::size_t d = order[i];
        const auto m = embed_pad(corpus[d].tokens, table, config.pad_length);
        const auto pooled = forward_pooled(params, m.rows);
        const auto mask = make_dropout_mask(total, config.dropout_rate, rng);
        const auto probs = softmax(dense_forward(params, pooled.values, &mask));
        const int y = targets[d];
        epoch_loss -= std::log(std::max(probs[static_cast<std::size_t>(y)], 1e-300));
        std::array<double, kNumClasses> g_logit{probs[0], probs[1]};
        g_logit[static_cast<std::size_t>(y)] -= 1.0;
        for (std::size_t c = 0; c < kNumClasses; ++c) dense_bias_grad[c] += g_logit[c];

        std::size_t k = 0;
        for (std::size_t b = 0; b < params.convs.size(); ++b) {
          const auto& bank = params.convs[b];
          const std::size_t width = bank.size * dim;
          for (std::size_t f = 0; f < bank.biases.size(); ++f, ++k) {
            const double x = pooled.values[k] * mask[k];
            if (x == 0.0) continue;  // dead filter or dropped unit: no gradient flows
            double g_x = 0.0;
            for (std::size_t c = 0; c < kNumClasses; ++c) {
              dense_grad(k, c) += x * g_logit[c];
              g_x += params.dense_weights(k, c) * g_logit[c];
            }
            const double g_z = g_x * mask[k];
            const double* window = m.rows.data.data() + pooled.argmax[k] * dim;
            double* gw = conv_grad[b].data.data() + f * width;
            for (std::size_t j = 0; j < width; ++j) gw[j] += g_z * window[j];
            bias_grad[b][f] += g_z;
          }
        }
      }

      const double scale = config.learning_rate / static_cast<double>(end - start);
      for (std::size_t b = 0; b < params.convs.size(); ++b) {
        auto& bank = params.convs[b];
        for (std::size_t j = 0; j < bank.weights.data.size(); ++j) bank.weights.data[j] -= scale * conv_grad[b].data[j];
        for (std::size_t f = 0; f < bank.biases.size(); ++f) bank.biases[f] -= scale * bias_grad[b][f];
      }
      for (std::size_t j = 0; j < dense_grad.data.size(); ++j) params.dense_weights.data[j] -= scale * dense_grad.data[j];
      for (std::size_t c = 0; c < kNumClasses; ++c) params.dense_biases[c] -= scale * dense_bias_grad[c];
    }
    if (log) log->epoch_loss.push_back(epoch_loss / static_cast<double>(corpus.size()));
  }
  return params;
}

namespace {

nlohmann::ordered_json config_to_json(const CnnConfig& c) {
  nlohmann::ordered_json j;
  j["dim"] = c.dim;
  j["pad_length"] = c.pad_length;
  j["filter_sizes"] = c.filter_sizes;
  j["filters_per_size"] = c.filters_per_size;
  j["dropout_rate"] = c.dropout_rate;
  j["seed"] = c.seed;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  return j;
}

CnnConfig config_from_json(const nlohmann::json& j) {
  CnnConfig c;
  c.dim = j.at("dim").get<std::size_t>();
  c.pad_length = j.at("pad_length").get<std::size_t>();
  c.filter_sizes = j.at("filter_sizes").get<std::vector<std::size_t>>();
  c.filters_per_size = j.at("filters_per_size").get<std::size_t>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  return c;
}

}  // namespace

std::string cnn_params_to_json(const CnnParams& params) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["config"] = config_to_json(params.config);
  auto conv_weights = nlohmann::ordered_json::array();
  auto conv_biases = nlohmann::ordered_json::array();
  const std::size_t dim = params.config.dim;
  for (const auto& bank : params.convs) {
    auto filters = nlohmann::ordered_json::array();
    for (std::size_t f = 0; f < bank.weights.rows; ++f) {
      auto rows = nlohmann::ordered_json::array();
      for (std::size_t t = 0; t < bank.size; ++t) {
        const auto row = bank.weights.row(f).subspan(t * dim, dim);
        rows.push_back(std::vector<double>(row.begin(), row.end()));
      }
      filters.push_back(std::move(rows));
    }
    conv_weights.push_back(std::move(filters));
    conv_biases.push_back(bank.biases);
  }
  j["conv_weights"] = std::move(conv_weights);
  j["conv_biases"] = std::move(conv_biases);
  auto dense = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < params.dense_weights.rows; ++k) {
    const auto row = params.dense_weights.row(k);
    dense.push_back(std::vector<double>(row.begin(), row.end()));
  }
  j["dense_weights"] = std::move(dense);
  j["dense_biases"] = std::vector<double>(params.dense_biases.begin(), params.dense_biases.end());
  return j.dump() + "\n";
}

CnnParams cnn_params_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format_version").get<int>() != 1) throw Error("unsupported cnn checkpoint format_version");
    CnnParams params;
    params.config = config_from_json(j.at("config"));
    params.config.validate();
    const auto& c = params.config;
    const auto& weights = j.at("conv_weights");
    const auto& biases = j.at("conv_biases");
    if (weights.size() != c.filter_sizes.size() || biases.size() != c.filter_sizes.size()) {
      throw Error("cnn checkpoint: conv bank count does not match config");
    }
    for (std::size_t b = 0; b < c.filter_sizes.size(); ++b) {
      ConvBank bank;
      bank.size = c.filter_sizes[b];
      bank.weights = Matrix(c.filters_per_size, bank.size * c.dim);
      bank.biases = biases[b].get<std::vector<double>>();
      if (weights[b].size() != c.filters_per_size || bank.biases.size() != c.filters_per_size) {
        throw Error("cnn checkpoint: filter count mismatch");
      }
      for (std::size_t f = 0; f < c.filters_per_size; ++f) {
        const auto& rows = weights[b][f];
        if (rows.size() != bank.size) throw Error("cnn checkpoint: filter height mismatch");
        for (std::size_t t = 0; t < bank.size; ++t) {
          const auto values = rows[t].get<std::vector<double>>();
          if (values.size() != c.dim) throw Error("cnn checkpoint: filter width mismatch");
          std::copy(values.begin(), values.end(), bank.weights.row(f).begin() + static_cast<std::ptrdiff_t>(t * c.dim));
        }
      }
      params.convs.push_back(std::move(bank));
    }
    const auto& dense = j.at("dense_weights");
    if (dense.size() != c.total_filters()) throw Error("cnn checkpoint: dense weight rows mismatch");
    params.dense_weights = Matrix(c.total_filters(), kNumClasses);
    for (std::size_t k = 0; k < dense.size(); ++k) {
      const auto row = dense[k].get<std::vector<double>>();
      if (row.size() != kNumClasses) throw Error("cnn checkpoint: dense weight width mismatch");
      std::copy(row.begin(), row.end(), params.dense_weights.row(k).begin());
    }
    const auto db = j.at("dense_biases").get<std::vector<double>>();
    if (db.size() != kNumClasses) throw Error("cnn checkpoint: dense bias length mismatch");
    params.dense_biases = {db[0], db[1]};
    for (const auto& bank : params.convs) {
      for (double v : bank.weights.data) {
        if (!std::isfinite(v)) throw Error("cnn checkpoint: non-finite weight");
      }
    }
    return params;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed cnn checkpoint: ") + e.what());
  }
}

void save_cnn_params(const CnnParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << cnn_params_to_json(params);
}

CnnParams load_cnn_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open cnn checkpoint " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return cnn_params_from_json(buf.str());
}

}  // namespace textlrp
