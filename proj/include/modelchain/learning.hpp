#pragma once

// Online logistic regression trained by SGD. This is the learner whose
// parameters travel in UPDATE transactions; patient rows never leave the
// Partition they belong to.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "modelchain/bytes.hpp"
#include "modelchain/errors.hpp"
#include "modelchain/ledger.hpp"

namespace modelchain {

struct Row {
  std::vector<double> x;
  int label = 0;  // 0 or 1

  bool operator==(const Row&) const = default;
};

// Horizontally partitioned data: same features, different rows.
struct Partition {
  std::vector<Row> rows;

  bool empty() const noexcept { return rows.empty(); }
  std::size_t size() const noexcept { return rows.size(); }
  std::size_t feature_count() const noexcept { return rows.empty() ? 0 : rows.front().x.size(); }

  bool operator==(const Partition&) const = default;
};

struct LearnerParams {
  double learning_rate = 0.1;
  unsigned epochs = 5;
  double l2 = 0.0;
  std::uint64_t shuffle_seed = 0;
};

// weights[0] is the bias; weights.size() == m + 1.
struct Model {
  std::uint32_t m = 0;
  std::vector<double> weights;
  std::uint32_t round = 0;
  SiteId origin_site = 0;

  static Model zeros(std::uint32_t m, SiteId site) { return Model{m, std::vector<double>(m + 1, 0.0), 0, site}; }

  bool operator==(const Model&) const = default;
};

inline void check_model(const Model& model) {
  if (model.weights.size() != static_cast<std::size_t>(model.m) + 1)
    throw ModelError("model has " + std::to_string(model.weights.size()) + " weights, expected m+1 = " +
                     std::to_string(model.m + 1));
  for (double w : model.weights)
    if (!std::isfinite(w)) throw ModelError("model weight is not finite");
}

inline void check_dimensions(const Model& model, std::size_t features) {
  if (features != model.m)
    throw ModelError("dimension mismatch: model has m=" + std::to_string(model.m) + ", data has " +
                     std::to_string(features) + " features");
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

inline double linear_score(std::span<const double> weights, std::span<const double> x) {
  double z = weights[0];
  for (std::size_t i = 0; i < x.size(); ++i) z += weights[i + 1] * x[i];
  return z;
}

inline double predict_proba(const Model& model, std::span<const double> x) {
  check_dimensions(model, x.size());
  return sigmoid(linear_score(model.weights, x));
}

// Per-row L2-regularized logistic loss. The bias is not regularized.
inline double logistic_loss(std::span<const double> weights, const Row& row, double l2) {
  double z = linear_score(weights, row.x);
  // log(1 + e^z) - y z, evaluated without overflow
  double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  double loss = softplus - row.label * z;
  double reg = 0.0;
  for (std::size_t j = 1; j < weights.size(); ++j) reg += weights[j] * weights[j];
  return loss + 0.5 * l2 * reg;
}

// Analytic gradient of logistic_loss with respect to the weights.
inline std::vector<double> loss_gradient(std::span<const double> weights, const Row& row, double l2) {
  double residual = sigmoid(linear_score(weights, row.x)) - row.label;
  std::vector<double> g(weights.size());
  g[0] = residual;
  for (std::size_t j = 1; j < weights.size(); ++j) g[j] = residual * row.x[j - 1] + l2 * weights[j];
  return g;
}

inline double mean_loss(const Model& model, const Partition& p, double l2) {
  double total = 0.0;
  for (const Row& r : p.rows) total += logistic_loss(model.weights, r, l2);
  return p.empty() ? 0.0 : total / static_cast<double>(p.size());
}

namespace detail {

// Fisher-Yates over mt19937_64 with plain modulo reduction, so the visiting
// order is identical across standard library implementations.
inline void shuffle_indices(std::vector<std::size_t>& idx, std::mt19937_64& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
}

inline void sgd_epochs(std::vector<double>& w, const Partition& p, const LearnerParams& hp) {
  if (p.empty() || hp.epochs == 0) return;
  std::mt19937_64 rng(hp.shuffle_seed);
  std::vector<std::size_t> order(p.size());
  for (unsigned e = 0; e < hp.epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_indices(order, rng);
    for (std::size_t i : order) {
      auto g = loss_gradient(w, p.rows[i], hp.l2);
      for (std::size_t j = 0; j < w.size(); ++j) w[j] -= hp.learning_rate * g[j];
    }
  }
}

inline void check_params(const LearnerParams& hp) {
  if (!(hp.learning_rate > 0.0) || !std::isfinite(hp.learning_rate))
    throw ConfigError("learning_rate must be a positive finite number");
  if (!(hp.l2 >= 0.0) || !std::isfinite(hp.l2)) throw ConfigError("l2 must be a non-negative finite number");
}

}  // namespace detail

// Fresh model from zero weights; round 0.
inline Model train_local(const Partition& p, const LearnerParams& hp, SiteId site) {
  if (p.empty()) throw ModelError("cannot train on an empty partition");
  detail::check_params(hp);
  Model model = Model::zeros(static_cast<std::uint32_t>(p.feature_count()), site);
  detail::sgd_epochs(model.weights, p, hp);
  check_model(model);
  return model;
}

// Continues SGD from the incoming weights; never restarts from zero.
inline Model update_model(const Model& model, const Partition& p, const LearnerParams& hp, SiteId site) {
  check_model(model);
  if (!p.empty()) check_dimensions(model, p.feature_count());
  detail::check_params(hp);
  Model next = model;
  detail::sgd_epochs(next.weights, p, hp);
  next.round = model.round + 1;
  next.origin_site = site;
  check_model(next);
  return next;
}

// Misclassification rate; p >= 0.5 predicts class 1.
inline double evaluate(const Model& model, const Partition& p) {
  if (p.empty()) throw ModelError("cannot evaluate on an empty partition");
  std::size_t wrong = 0;
  for (const Row& r : p.rows) {
    int predicted = predict_proba(model, r.x) >= 0.5 ? 1 : 0;
    if (predicted != r.label) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(p.size());
}

inline constexpr char kModelMagic[4] = {'M', 'C', 'M', '1'};
inline constexpr std::size_t kModelHeaderBytes = 16;

inline constexpr std::size_t serialized_model_size(std::uint32_t m) {
  return kModelHeaderBytes + 8 * (static_cast<std::size_t>(m) + 1);
}

// "MCM1" | m u32 | round u32 | origin_site u32 | (m+1) x f64, all little-endian.
inline Bytes serialize_model(const Model& model) {
  check_model(model);
  Bytes out;
  out.reserve(serialized_model_size(model.m));
  for (char c : kModelMagic) out.push_back(static_cast<std::uint8_t>(c));
  put_u32(out, model.m);
  put_u32(out, model.round);
  put_u32(out, model.origin_site);
  for (double w : model.weights) put_f64(out, w);
  return out;
}

inline Model deserialize_model(ByteView bytes) {
  if (bytes.size() < kModelHeaderBytes) throw ModelError("model payload truncated");
  for (std::size_t i = 0; i < 4; ++i)
    if (bytes[i] != static_cast<std::uint8_t>(kModelMagic[i])) throw ModelError("bad model magic");
  Model model;
  model.m = get_u32(bytes, 4);
  model.round = get_u32(bytes, 8);
  model.origin_site = get_u32(bytes, 12);
  if (model.m == 0xffffffffu || bytes.size() != serialized_model_size(model.m))
    throw ModelError("model payload length " + std::to_string(bytes.size()) + " does not match m=" +
                     std::to_string(model.m));
  model.weights.resize(model.m + 1);
  for (std::size_t j = 0; j <= model.m; ++j) model.weights[j] = get_f64(bytes, kModelHeaderBytes + 8 * j);
  check_model(model);
  return model;
}

// Default per-transaction metadata cap: 8 MiB.
inline constexpr std::size_t kDefaultMaxMetadataBytes = std::size_t{8} << 20;

inline void check_metadata_budget(ByteView payload, std::size_t max_bytes = kDefaultMaxMetadataBytes) {
  if (max_bytes == 0) throw ConfigError("max_metadata_bytes must be positive");
  if (payload.size() > max_bytes) throw MetadataBudgetError(payload.size(), max_bytes);
}

}  // namespace modelchain
