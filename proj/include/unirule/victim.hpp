#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "unirule/errors.hpp"
#include "unirule/rng.hpp"
#include "unirule/text.hpp"

namespace unirule {

struct LabeledSample {
  std::string text;  // cleaned form
  int label = 0;     // 0 = negative, 1 = positive
};

struct Prediction {
  int label = 0;
  double confidence = 0.0;  // probability of the predicted class, >= 0.5
};

// Opaque trained classifier. Prediction is deterministic given fixed
// parameters and may be called from any number of threads.
class VictimModel {
 public:
  virtual ~VictimModel() = default;
  virtual Prediction predict(std::string_view text) const = 0;
  virtual std::string kind() const = 0;
  virtual nlohmann::json to_json() const = 0;
};

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline void require_trainable(const std::vector<LabeledSample>& samples) {
  if (samples.size() < 2) throw DataError("training requires at least 2 samples");
  bool has[2] = {false, false};
  for (const auto& s : samples) {
    if (s.label != 0 && s.label != 1) throw DataError("training labels must be 0 or 1");
    has[s.label] = true;
  }
  if (!has[0] || !has[1]) throw DataError("training requires samples from both classes");
}

inline std::vector<double> json_to_doubles(const nlohmann::json& j) {
  if (!j.is_array()) throw DataError("model file: expected a parameter array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) out.push_back(v.get<double>());
  return out;
}

}  // namespace detail

// Binary logistic classifier over hashed counts of character n-grams
// (n = 2, 3, 4) drawn from each token padded with boundary markers, hashed
// with FNV-1a into 2^18 buckets. Collisions stay unresolved, standard
// hashing-trick behaviour.
class CharNGramLinear final : public VictimModel {
 public:
  static constexpr int kBucketBits = 18;
  static constexpr std::size_t kBuckets = std::size_t{1} << kBucketBits;

  struct Hyper {
    double learning_rate = 0.1;
    int epochs = 5;
    double l2 = 1e-6;
  };

  // Bucket index of every n-gram occurrence; the feature vector is the
  // occurrence count, so duplicates are kept.
  static void featurize(std::string_view text, std::vector<std::uint32_t>& out) {
    out.clear();
    std::string padded;
    std::size_t i = 0;
    while (i < text.size()) {
      if (text[i] == ' ') {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j < text.size() && text[j] != ' ') ++j;
      padded.clear();
      padded.push_back('^');
      padded.append(text.substr(i, j - i));
      padded.push_back('$');
      for (std::size_t n = 2; n <= 4; ++n) {
        if (padded.size() < n) break;
        for (std::size_t k = 0; k + n <= padded.size(); ++k) {
          out.push_back(static_cast<std::uint32_t>(fnv1a64(padded.data() + k, n) & (kBuckets - 1)));
        }
      }
      i = j;
    }
  }

  static CharNGramLinear train(const std::vector<LabeledSample>& samples, std::uint64_t seed) {
    return train(samples, seed, Hyper{});
  }

  // Stochastic gradient descent on cross-entropy with L2 decay. The decay
  // factor is carried as a global scale on the weight vector and folded back
  // in at the end, so each step touches only the sample's features.
  static CharNGramLinear train(const std::vector<LabeledSample>& samples, std::uint64_t seed,
                               Hyper hyper) {
    detail::require_trainable(samples);
    CharNGramLinear m;
    m.seed_ = seed;
    m.hyper_ = hyper;
    m.weights_.resize(kBuckets);
    Rng init_rng(derive_seed(seed, "char-ngram-init"));
    for (auto& w : m.weights_) w = init_rng.uniform(-0.05, 0.05);
    m.bias_ = 0.0;

    Rng order_rng(derive_seed(seed, "char-ngram-epoch"));
    std::vector<std::uint32_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0u);
    std::vector<std::uint32_t> feats;
    double scale = 1.0;
    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
      order_rng.shuffle(order);
      for (const auto si : order) {
        const auto& s = samples[si];
        featurize(s.text, feats);
        double dot = 0.0;
        for (const auto f : feats) dot += m.weights_[f];
        const double p = detail::sigmoid(scale * dot + m.bias_);
        const double g = p - static_cast<double>(s.label);
        scale *= 1.0 - hyper.learning_rate * hyper.l2;
        const double step = hyper.learning_rate * g / scale;
        for (const auto f : feats) m.weights_[f] -= step;
        m.bias_ -= hyper.learning_rate * g;
      }
    }
    for (auto& w : m.weights_) w *= scale;
    return m;
  }

  double margin(std::string_view text) const {
    thread_local std::vector<std::uint32_t> feats;
    featurize(text, feats);
    double s = bias_;
    for (const auto f : feats) s += weights_[f];
    return s;
  }

  Prediction predict(std::string_view text) const override {
    const double p1 = detail::sigmoid(margin(text));
    Prediction out;
    out.label = p1 >= 0.5 ? 1 : 0;
    out.confidence = out.label == 1 ? p1 : 1.0 - p1;
    return out;
  }

  // Summed cross-entropy over a batch; the unit the gradient check differentiates.
  double batch_cross_entropy(const std::vector<LabeledSample>& batch) const {
    double loss = 0.0;
    for (const auto& s : batch) {
      const double p = detail::sigmoid(margin(s.text));
      const double eps = 1e-12;
      loss -= s.label == 1 ? std::log(std::max(p, eps)) : std::log(std::max(1.0 - p, eps));
    }
    return loss;
  }

  std::string kind() const override { return "char_ngram_linear"; }

  // Analytic gradient of batch_cross_entropy at the current parameters,
  // sparse over the feature buckets the batch touches.
  struct Gradients {
    std::unordered_map<std::uint32_t, double> weights;
    double bias = 0.0;
  };

  Gradients batch_gradients(const std::vector<LabeledSample>& batch) const {
    Gradients g;
    std::vector<std::uint32_t> feats;
    for (const auto& s : batch) {
      featurize(s.text, feats);
      double dot = 0.0;
      for (const auto f : feats) dot += weights_[f];
      const double err = detail::sigmoid(dot + bias_) - static_cast<double>(s.label);
      for (const auto f : feats) g.weights[f] += err;
      g.bias += err;
    }
    return g;
  }

  nlohmann::json to_json() const override {
    return nlohmann::json{
        {"format", "unirule-victim"},
        {"version", 1},
        {"kind", kind()},
        {"seed", seed_},
        {"hyper",
         {{"learning_rate", hyper_.learning_rate}, {"epochs", hyper_.epochs}, {"l2", hyper_.l2}}},
        {"params", {{"bias", bias_}, {"weights", weights_}}}};
  }

  static CharNGramLinear from_json(const nlohmann::json& j) {
    CharNGramLinear m;
    m.seed_ = j.at("seed").get<std::uint64_t>();
    const auto& h = j.at("hyper");
    m.hyper_.learning_rate = h.at("learning_rate").get<double>();
    m.hyper_.epochs = h.at("epochs").get<int>();
    m.hyper_.l2 = h.at("l2").get<double>();
    const auto& p = j.at("params");
    m.bias_ = p.at("bias").get<double>();
    m.weights_ = detail::json_to_doubles(p.at("weights"));
    if (m.weights_.size() != kBuckets) {
      throw DataError("model file: char_ngram_linear weight count mismatch");
    }
    return m;
  }

  std::vector<double>& weights() { return weights_; }
  const std::vector<double>& weights() const { return weights_; }
  double& bias() { return bias_; }

 private:
  // zero-initialized so even an untrained model predicts (p = 0.5)
  std::vector<double> weights_ = std::vector<double>(kBuckets, 0.0);
  double bias_ = 0.0;
  std::uint64_t seed_ = 0;
  Hyper hyper_;
};

// Averaged learned word embeddings into one rectified hidden layer and a
// 2-way softmax. The vocabulary is frozen at training time; unseen tokens
// share the unknown-token embedding at id 0, which is exactly the surface a
// character-level typo moves a word onto.
class WordAvgMLP final : public VictimModel {
 public:
  struct Hyper {
    double learning_rate = 0.05;
    int epochs = 10;
    int emb_dim = 32;
    int hidden_dim = 64;
  };

  struct TransparentHash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
  };
  using VocabMap = std::unordered_map<std::string, int, TransparentHash, std::equal_to<>>;

  int token_id(std::string_view tok) const {
    const auto it = vocab_map_.find(tok);
    return it == vocab_map_.end() ? 0 : it->second;
  }

  void token_ids(std::string_view text, std::vector<int>& out) const {
    out.clear();
    std::size_t i = 0;
    while (i < text.size()) {
      if (text[i] == ' ') {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j < text.size() && text[j] != ' ') ++j;
      out.push_back(token_id(text.substr(i, j - i)));
      i = j;
    }
  }

  static WordAvgMLP train(const std::vector<LabeledSample>& samples, std::uint64_t seed) {
    return train(samples, seed, Hyper{});
  }

  static WordAvgMLP train(const std::vector<LabeledSample>& samples, std::uint64_t seed,
                          Hyper hyper) {
    detail::require_trainable(samples);
    WordAvgMLP m;
    m.seed_ = seed;
    m.hyper_ = hyper;

    // Vocabulary in first-occurrence order; id 0 is the unknown token.
    m.vocab_.push_back("");
    for (const auto& s : samples) {
      for (const auto tok : tokens(s.text)) {
        std::string key(tok);
        if (m.vocab_map_.emplace(key, static_cast<int>(m.vocab_.size())).second) {
          m.vocab_.push_back(std::move(key));
        }
      }
    }

    const int v = static_cast<int>(m.vocab_.size());
    const int d = hyper.emb_dim;
    const int h = hyper.hidden_dim;
    Rng init_rng(derive_seed(seed, "mlp-init"));
    m.emb_.resize(static_cast<std::size_t>(v) * d);
    m.w1_.resize(static_cast<std::size_t>(h) * d);
    m.b1_.assign(h, 0.0);
    m.w2_.resize(static_cast<std::size_t>(2) * h);
    m.b2_.assign(2, 0.0);
    for (auto& x : m.emb_) x = init_rng.uniform(-0.05, 0.05);
    for (auto& x : m.w1_) x = init_rng.uniform(-0.05, 0.05);
    for (auto& x : m.w2_) x = init_rng.uniform(-0.05, 0.05);

    Rng order_rng(derive_seed(seed, "mlp-epoch"));
    std::vector<std::uint32_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0u);
    Scratch sc;
    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
      order_rng.shuffle(order);
      for (const auto si : order) {
        m.backprop(samples[si], sc);
        m.apply_sgd_step(sc);
      }
    }
    return m;
  }

  Prediction predict(std::string_view text) const override {
    thread_local Scratch sc;
    forward(text, sc);
    Prediction out;
    out.label = sc.prob[1] >= sc.prob[0] ? 1 : 0;
    out.confidence = sc.prob[out.label];
    return out;
  }

  double batch_cross_entropy(const std::vector<LabeledSample>& batch) const {
    Scratch sc;
    double loss = 0.0;
    for (const auto& s : batch) {
      forward(s.text, sc);
      loss -= std::log(std::max(sc.prob[s.label], 1e-12));
    }
    return loss;
  }

  // Dense summed cross-entropy gradients over a batch, laid out exactly like
  // the parameter vectors. Shares the backprop core with training.
  struct Gradients {
    std::vector<double> emb, w1, b1, w2, b2;
  };

  Gradients batch_gradients(const std::vector<LabeledSample>& batch) const {
    Gradients g;
    g.emb.assign(emb_.size(), 0.0);
    g.w1.assign(w1_.size(), 0.0);
    g.b1.assign(b1_.size(), 0.0);
    g.w2.assign(w2_.size(), 0.0);
    g.b2.assign(b2_.size(), 0.0);
    Scratch sc;
    const int d = hyper_.emb_dim;
    const int h = hyper_.hidden_dim;
    for (const auto& s : batch) {
      backprop(s, sc);
      for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < h; ++c) g.w2[static_cast<std::size_t>(r) * h + c] += sc.dlogits[r] * sc.hidden[c];
        g.b2[r] += sc.dlogits[r];
      }
      for (int r = 0; r < h; ++r) {
        if (sc.dh_pre[r] == 0.0) continue;
        for (int c = 0; c < d; ++c) g.w1[static_cast<std::size_t>(r) * d + c] += sc.dh_pre[r] * sc.pooled[c];
        g.b1[r] += sc.dh_pre[r];
      }
      if (!sc.ids.empty()) {
        const double inv = 1.0 / static_cast<double>(sc.ids.size());
        for (const int id : sc.ids) {
          for (int c = 0; c < d; ++c) g.emb[static_cast<std::size_t>(id) * d + c] += sc.dx[c] * inv;
        }
      }
    }
    return g;
  }

  std::string kind() const override { return "word_avg_mlp"; }

  nlohmann::json to_json() const override {
    nlohmann::json vocab = nlohmann::json::array();
    for (const auto& w : vocab_) vocab.push_back(w);
    return nlohmann::json{{"format", "unirule-victim"},
                          {"version", 1},
                          {"kind", kind()},
                          {"seed", seed_},
                          {"hyper",
                           {{"learning_rate", hyper_.learning_rate},
                            {"epochs", hyper_.epochs},
                            {"emb_dim", hyper_.emb_dim},
                            {"hidden_dim", hyper_.hidden_dim}}},
                          {"params",
                           {{"vocab", std::move(vocab)},
                            {"emb", emb_},
                            {"w1", w1_},
                            {"b1", b1_},
                            {"w2", w2_},
                            {"b2", b2_}}}};
  }

  static WordAvgMLP from_json(const nlohmann::json& j) {
    WordAvgMLP m;
    m.seed_ = j.at("seed").get<std::uint64_t>();
    const auto& h = j.at("hyper");
    m.hyper_.learning_rate = h.at("learning_rate").get<double>();
    m.hyper_.epochs = h.at("epochs").get<int>();
    m.hyper_.emb_dim = h.at("emb_dim").get<int>();
    m.hyper_.hidden_dim = h.at("hidden_dim").get<int>();
    const auto& p = j.at("params");
    for (const auto& w : p.at("vocab")) m.vocab_.push_back(w.get<std::string>());
    if (m.vocab_.empty() || !m.vocab_[0].empty()) {
      throw DataError("model file: word_avg_mlp vocab must start with the unknown token");
    }
    for (std::size_t i = 1; i < m.vocab_.size(); ++i) m.vocab_map_[m.vocab_[i]] = static_cast<int>(i);
    m.emb_ = detail::json_to_doubles(p.at("emb"));
    m.w1_ = detail::json_to_doubles(p.at("w1"));
    m.b1_ = detail::json_to_doubles(p.at("b1"));
    m.w2_ = detail::json_to_doubles(p.at("w2"));
    m.b2_ = detail::json_to_doubles(p.at("b2"));
    const auto d = static_cast<std::size_t>(m.hyper_.emb_dim);
    const auto hd = static_cast<std::size_t>(m.hyper_.hidden_dim);
    if (m.emb_.size() != m.vocab_.size() * d || m.w1_.size() != hd * d ||
        m.b1_.size() != hd || m.w2_.size() != 2 * hd || m.b2_.size() != 2) {
      throw DataError("model file: word_avg_mlp parameter shape mismatch");
    }
    return m;
  }

  std::size_t vocab_size() const { return vocab_.size(); }
  std::vector<double>& embeddings() { return emb_; }
  std::vector<double>& hidden_weights() { return w1_; }
  std::vector<double>& hidden_bias() { return b1_; }
  std::vector<double>& output_weights() { return w2_; }
  std::vector<double>& output_bias() { return b2_; }

  // Mean embedding of the text's tokens; the interface the OOV sensitivity
  // checks look at.
  std::vector<double> pooled_embedding(std::string_view text) const {
    Scratch sc;
    forward(text, sc);
    return sc.pooled;
  }

 private:
  struct Scratch {
    std::vector<int> ids;
    std::vector<double> pooled, h_pre, hidden, dh_pre, dx;
    double prob[2] = {0, 0};
    double dlogits[2] = {0, 0};
  };

  void forward(std::string_view text, Scratch& sc) const {
    const int d = hyper_.emb_dim;
    const int h = hyper_.hidden_dim;
    token_ids(text, sc.ids);
    sc.pooled.assign(d, 0.0);
    if (!sc.ids.empty()) {
      for (const int id : sc.ids) {
        const double* row = emb_.data() + static_cast<std::size_t>(id) * d;
        for (int c = 0; c < d; ++c) sc.pooled[c] += row[c];
      }
      const double inv = 1.0 / static_cast<double>(sc.ids.size());
      for (int c = 0; c < d; ++c) sc.pooled[c] *= inv;
    }
    sc.h_pre.assign(h, 0.0);
    sc.hidden.assign(h, 0.0);
    for (int r = 0; r < h; ++r) {
      const double* row = w1_.data() + static_cast<std::size_t>(r) * d;
      double acc = b1_[r];
      for (int c = 0; c < d; ++c) acc += row[c] * sc.pooled[c];
      sc.h_pre[r] = acc;
      sc.hidden[r] = acc > 0.0 ? acc : 0.0;
    }
    double logits[2];
    for (int r = 0; r < 2; ++r) {
      const double* row = w2_.data() + static_cast<std::size_t>(r) * h;
      double acc = b2_[r];
      for (int c = 0; c < h; ++c) acc += row[c] * sc.hidden[c];
      logits[r] = acc;
    }
    const double mx = std::max(logits[0], logits[1]);
    const double e0 = std::exp(logits[0] - mx);
    const double e1 = std::exp(logits[1] - mx);
    sc.prob[0] = e0 / (e0 + e1);
    sc.prob[1] = e1 / (e0 + e1);
  }

  // Per-sample forward + backward. Leaves dlogits, dh_pre and dx in the
  // scratch; parameter gradients are outer products of those with the
  // activations, formed by apply_sgd_step and batch_gradients.
  void backprop(const LabeledSample& s, Scratch& sc) const {
    const int d = hyper_.emb_dim;
    const int h = hyper_.hidden_dim;
    forward(s.text, sc);
    sc.dlogits[0] = sc.prob[0] - (s.label == 0 ? 1.0 : 0.0);
    sc.dlogits[1] = sc.prob[1] - (s.label == 1 ? 1.0 : 0.0);
    sc.dh_pre.assign(h, 0.0);
    for (int r = 0; r < 2; ++r) {
      const double* row = w2_.data() + static_cast<std::size_t>(r) * h;
      for (int c = 0; c < h; ++c) sc.dh_pre[c] += row[c] * sc.dlogits[r];
    }
    for (int c = 0; c < h; ++c) {
      if (sc.h_pre[c] <= 0.0) sc.dh_pre[c] = 0.0;
    }
    sc.dx.assign(d, 0.0);
    for (int r = 0; r < h; ++r) {
      if (sc.dh_pre[r] == 0.0) continue;
      const double* row = w1_.data() + static_cast<std::size_t>(r) * d;
      for (int c = 0; c < d; ++c) sc.dx[c] += row[c] * sc.dh_pre[r];
    }
  }

  void apply_sgd_step(const Scratch& sc) {
    const int d = hyper_.emb_dim;
    const int h = hyper_.hidden_dim;
    const double lr = hyper_.learning_rate;
    for (int r = 0; r < 2; ++r) {
      double* row = w2_.data() + static_cast<std::size_t>(r) * h;
      for (int c = 0; c < h; ++c) row[c] -= lr * sc.dlogits[r] * sc.hidden[c];
      b2_[r] -= lr * sc.dlogits[r];
    }
    for (int r = 0; r < h; ++r) {
      if (sc.dh_pre[r] == 0.0) continue;
      double* row = w1_.data() + static_cast<std::size_t>(r) * d;
      for (int c = 0; c < d; ++c) row[c] -= lr * sc.dh_pre[r] * sc.pooled[c];
      b1_[r] -= lr * sc.dh_pre[r];
    }
    if (!sc.ids.empty()) {
      const double inv = 1.0 / static_cast<double>(sc.ids.size());
      for (const int id : sc.ids) {
        double* row = emb_.data() + static_cast<std::size_t>(id) * d;
        for (int c = 0; c < d; ++c) row[c] -= lr * sc.dx[c] * inv;
      }
    }
  }

  std::vector<std::string> vocab_;  // id order; [0] is the unknown token ""
  VocabMap vocab_map_;
  std::vector<double> emb_, w1_, b1_, w2_, b2_;
  std::uint64_t seed_ = 0;
  Hyper hyper_;
};

// --- model container --------------------------------------------------------

inline std::unique_ptr<VictimModel> victim_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("format") || j.at("format") != "unirule-victim") {
    throw DataError("model file: not a unirule victim container");
  }
  if (!j.contains("version") || !j.at("version").is_number_integer() ||
      j.at("version").get<int>() != 1) {
    throw DataError("model file: unknown container version");
  }
  const auto kind = j.at("kind").get<std::string>();
  try {
    if (kind == "char_ngram_linear") {
      return std::make_unique<CharNGramLinear>(CharNGramLinear::from_json(j));
    }
    if (kind == "word_avg_mlp") {
      return std::make_unique<WordAvgMLP>(WordAvgMLP::from_json(j));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model file: malformed parameters: ") + e.what());
  }
  throw DataError("model file: unknown model kind '" + kind + "'");
}

}  // namespace unirule
