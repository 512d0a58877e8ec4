#pragma once

// Proof-of-information: the site whose data the current model predicts worst
// wins the right to perform the next update. Each function below is one step
// of a site's state machine. Steps only read the chain and return the
// transactions the site posts; the caller mines each one before running the
// next step, so a later step always sees the effects of an earlier one.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_set>
#include <vector>

#include "modelchain/errors.hpp"
#include "modelchain/learning.hpp"
#include "modelchain/ledger.hpp"

namespace modelchain {

struct ProtocolConfig {
  std::uint64_t delta = 1;  // polling period, ticks
  std::uint64_t theta = 2;  // bid-collection window, ticks
  std::uint32_t n_sites = 1;
  std::optional<double> error_threshold;        // stop once "good enough"
  std::optional<std::uint64_t> max_iterations;  // stop once "old enough"
  unsigned difficulty = kDefaultDifficulty;
  std::size_t max_metadata_bytes = kDefaultMaxMetadataBytes;
  std::uint64_t seed = 0;
  std::uint64_t max_ticks = 100000;  // hard horizon for stalled networks

  void validate() const {
    if (delta < 1) throw ConfigError("protocol.delta must be >= 1");
    if (theta < 1) throw ConfigError("protocol.theta must be >= 1");
    if (n_sites < 1) throw ConfigError("protocol.n_sites must be >= 1");
    if (error_threshold && !(*error_threshold >= 0.0 && *error_threshold <= 1.0))
      throw ConfigError("protocol.error_threshold must lie in [0,1]");
    if (max_iterations && *max_iterations < 1) throw ConfigError("protocol.max_iterations must be >= 1");
    if (difficulty > kMaxDifficulty)
      throw ConfigError("protocol.difficulty must be <= " + std::to_string(kMaxDifficulty));
    if (max_metadata_bytes == 0) throw ConfigError("protocol.max_metadata_bytes must be > 0");
    if (max_ticks < 1) throw ConfigError("protocol.max_ticks must be >= 1");
  }
};

enum class StopReason { Consensus, Threshold, Ttl, Stalled };

inline std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::Consensus: return "CONSENSUS";
    case StopReason::Threshold: return "THRESHOLD";
    case StopReason::Ttl: return "TTL";
    case StopReason::Stalled: return "STALLED";
  }
  return "?";
}

inline std::optional<StopReason> parse_stop_reason(std::string_view s) {
  if (s == "CONSENSUS") return StopReason::Consensus;
  if (s == "THRESHOLD") return StopReason::Threshold;
  if (s == "TTL") return StopReason::Ttl;
  if (s == "STALLED") return StopReason::Stalled;
  return std::nullopt;
}

// Identifies one learner call. `t` is the ordinal of the UPDATE whose model
// is being trained or scored (0 for the initialization round);
// `data_version` counts data changes (joins, injected rows) at the site.
struct EvalContext {
  SiteId site = 0;
  std::uint64_t t = 0;
  std::uint32_t data_version = 0;
};

// The online learner the protocol drives. Any implementation works as long
// as models serialize canonically.
class Learner {
 public:
  virtual ~Learner() = default;
  virtual Model train(const Partition& data, const EvalContext& ctx) = 0;
  virtual Model update(const Model& model, const Partition& data, const EvalContext& ctx) = 0;
  virtual double evaluate(const Model& model, const Partition& data, const EvalContext& ctx) = 0;
};

class LogisticLearner final : public Learner {
 public:
  explicit LogisticLearner(LearnerParams params = {}) : params_(params) {}

  Model train(const Partition& data, const EvalContext& ctx) override {
    ++calls_;
    return train_local(data, params_, ctx.site);
  }
  Model update(const Model& model, const Partition& data, const EvalContext& ctx) override {
    ++calls_;
    return update_model(model, data, params_, ctx.site);
  }
  double evaluate(const Model& model, const Partition& data, const EvalContext&) override {
    ++calls_;
    return modelchain::evaluate(model, data);
  }

  const LearnerParams& params() const noexcept { return params_; }
  std::uint64_t calls() const noexcept { return calls_; }

 private:
  LearnerParams params_;
  std::uint64_t calls_ = 0;
};

// Replays a fixed (site, t, data_version) -> error table. Models are
// placeholders (m = 1, zero weights) whose round and origin still make every
// published hash distinct. Used to replay hand-written protocol traces.
class ScriptedLearner final : public Learner {
 public:
  using Key = std::tuple<SiteId, std::uint64_t, std::uint32_t>;

  ScriptedLearner() = default;
  explicit ScriptedLearner(std::map<Key, double> table) : table_(std::move(table)) {}

  void set(SiteId site, std::uint64_t t, double error, std::uint32_t data_version = 0) {
    table_[{site, t, data_version}] = error;
  }
  const std::map<Key, double>& table() const noexcept { return table_; }

  Model train(const Partition&, const EvalContext& ctx) override { return Model::zeros(1, ctx.site); }

  Model update(const Model& model, const Partition&, const EvalContext& ctx) override {
    Model next = model;
    next.round = model.round + 1;
    next.origin_site = ctx.site;
    return next;
  }

  double evaluate(const Model&, const Partition&, const EvalContext& ctx) override {
    auto it = table_.find({ctx.site, ctx.t, ctx.data_version});
    if (it == table_.end())
      throw ConfigError("scripted error table has no entry for site " + std::to_string(ctx.site) + " at t=" +
                        std::to_string(ctx.t) + " data version " + std::to_string(ctx.data_version));
    return it->second;
  }

 private:
  std::map<Key, double> table_;
};

enum class Phase { Idle, AwaitingInitErrors, Updating, AwaitingBids };

inline std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Idle: return "IDLE";
    case Phase::AwaitingInitErrors: return "AWAITING_INIT_ERRORS";
    case Phase::Updating: return "UPDATING";
    case Phase::AwaitingBids: return "AWAITING_BIDS";
  }
  return "?";
}

struct SiteState {
  SiteId id = 0;
  Partition data;
  Phase phase = Phase::Idle;

  bool initialized = false;  // ran (or skipped, for late joiners) initialization
  std::optional<Model> local_model;
  double local_error = 0.0;

  // Valid in AwaitingBids: the UPDATE this site posted and when Θ expires.
  Digest awaiting_hash;
  std::uint64_t deadline_tick = 0;

  std::unordered_set<Digest> evaluated;  // UPDATE hashes already scored here
  std::uint64_t acted_height = 0;        // TRANSFERs at or below are consumed
  std::uint32_t data_version = 0;
  bool pending_new_data = false;

  static SiteState initial(SiteId id, Partition data) {
    SiteState s;
    s.id = id;
    s.data = std::move(data);
    return s;
  }
};

namespace detail {

inline Transaction make_update(const SiteState& site, const Model& model, double error,
                               const ProtocolConfig& cfg) {
  Bytes payload = serialize_model(model);
  check_metadata_budget(payload, cfg.max_metadata_bytes);
  return make_transaction(site.id, site.id, Flag::Update, std::move(payload), error);
}

inline bool has_initialize_from(const Chain& chain, SiteId site) {
  for (const Block& b : chain.blocks())
    if (b.tx.flag == Flag::Initialize && b.tx.from_site == site) return true;
  return false;
}

}  // namespace detail

// Winner of the initialization round once INITIALIZE errors from N distinct
// sites are on-chain: the minimum error, ties to the lowest site id.
inline std::optional<SiteId> init_winner(const Chain& chain, std::uint32_t n_sites) {
  std::map<SiteId, double> first;
  for (const Block& b : chain.blocks())
    if (b.tx.flag == Flag::Initialize) first.try_emplace(b.tx.from_site, b.tx.error);
  if (first.size() < n_sites) return std::nullopt;
  std::optional<SiteId> best;
  double best_error = 0.0;
  for (auto [site, err] : first) {
    if (!best || err < best_error) {
      best = site;
      best_error = err;
    }
  }
  return best;
}

// Train locally and post INITIALIZE (model withheld, hash and error only).
// A site that already has an INITIALIZE on-chain posts nothing.
inline std::optional<Transaction> poi_initialize(SiteState& site, const Chain& chain, Learner& learner) {
  if (site.initialized) return std::nullopt;
  site.initialized = true;
  site.phase = Phase::AwaitingInitErrors;
  if (detail::has_initialize_from(chain, site.id)) return std::nullopt;
  EvalContext ctx{site.id, 0, site.data_version};
  site.local_model = learner.train(site.data, ctx);
  site.local_error = learner.evaluate(*site.local_model, site.data, ctx);
  return make_transaction(site.id, site.id, Flag::Initialize, hash_bytes(serialize_model(*site.local_model)),
                          site.local_error);
}

// Waits for all N INITIALIZE errors. The winner hands the update right to
// itself with a TRANSFER; everyone else drops to Idle.
inline std::optional<Transaction> poi_await_initialization(SiteState& site, const Chain& chain,
                                                           const ProtocolConfig& cfg) {
  if (site.phase != Phase::AwaitingInitErrors) return std::nullopt;
  auto winner = init_winner(chain, cfg.n_sites);
  if (!winner) return std::nullopt;
  if (*winner != site.id) {
    site.phase = Phase::Idle;
    return std::nullopt;
  }
  site.phase = Phase::Updating;
  return make_transaction(site.id, site.id, Flag::Transfer, hash_bytes(serialize_model(*site.local_model)),
                          site.local_error);
}

// The initialization winner publishes its local model unchanged as the
// first UPDATE and opens its bid window.
inline Transaction publish_initial_model(SiteState& site, const ProtocolConfig& cfg, std::uint64_t tick) {
  if (site.phase != Phase::Updating || !site.local_model)
    throw ProtocolError("site " + std::to_string(site.id) + " publishes without holding the initial transfer");
  Transaction tx = detail::make_update(site, *site.local_model, site.local_error, cfg);
  site.phase = Phase::AwaitingBids;
  site.awaiting_hash = tx.model_hash;
  site.deadline_tick = tick + cfg.theta;
  site.evaluated.insert(tx.model_hash);
  return tx;
}

// Score the newest UPDATE once and post the error.
// The updater never bids on its own model.
inline std::optional<Transaction> on_poll(SiteState& site, const Chain& chain, Learner& learner) {
  auto latest = latest_update(chain);
  if (!latest || latest->from_site == site.id || site.evaluated.contains(latest->model_hash)) return std::nullopt;
  site.evaluated.insert(latest->model_hash);
  Model model = deserialize_model(latest->model_bytes);
  EvalContext ctx{site.id, count_updates(chain, latest->height), site.data_version};
  double err = learner.evaluate(model, site.data, ctx);
  return make_transaction(site.id, site.id, Flag::Evaluate, latest->model_hash, err);
}

// The TRANSFER this site should act on, if any: the most recent TRANSFER
// above both the latest UPDATE and the site's consumed mark, addressed here.
inline std::optional<std::uint64_t> pending_transfer(const SiteState& site, const Chain& chain) {
  auto latest = latest_update(chain);
  if (!latest) return std::nullopt;
  std::uint64_t floor = std::max(latest->height, site.acted_height);
  for (std::size_t h = chain.size(); h-- > floor + 1;) {
    const Transaction& tx = chain[h].tx;
    if (tx.flag != Flag::Transfer) continue;
    if (tx.to_site == site.id) return h;
    return std::nullopt;
  }
  return std::nullopt;
}

// Update the transferred model on local data and
// publish it.
inline Transaction on_transfer_received(SiteState& site, const Chain& chain, std::uint64_t transfer_height,
                                        Learner& learner, const ProtocolConfig& cfg, std::uint64_t tick) {
  const Transaction& transfer = chain[transfer_height].tx;
  auto source = find_update(chain, transfer.model_hash);
  if (!source)
    throw ProtocolError("TRANSFER at height " + std::to_string(transfer_height) + " references model " +
                        transfer.model_hash.hex() + " with no UPDATE on chain");
  site.acted_height = transfer_height;
  site.phase = Phase::Updating;
  EvalContext ctx{site.id, count_updates(chain) + 1, site.data_version};
  Model next = learner.update(deserialize_model(source->model_bytes), site.data, ctx);
  double err = learner.evaluate(next, site.data, ctx);
  Transaction tx = detail::make_update(site, next, err, cfg);
  site.phase = Phase::AwaitingBids;
  site.awaiting_hash = tx.model_hash;
  site.deadline_tick = tick + cfg.theta;
  site.evaluated.insert(tx.model_hash);
  return tx;
}

struct BidBoard {
  Digest target;
  SiteId updater = 0;
  double updater_error = 0.0;
  std::map<SiteId, double> entries;  // other sites' EVALUATE errors
};

inline BidBoard make_bid_board(const Chain& chain, const UpdateRecord& update) {
  BidBoard board{update.model_hash, update.from_site, update.error, {}};
  for (const Evaluation& e : collect_evaluations(chain, update.model_hash, update.height))
    if (e.site != update.from_site) board.entries[e.site] = e.error;
  return board;
}

struct BidDecision {
  std::optional<Transaction> transfer;
  bool consensus = false;
  bool empty_board = false;
};

// Close the bid window. The right moves only to a site whose error is
// strictly larger than the updater's; otherwise the model is the consensus.
inline BidDecision decide_bid(const SiteState& site, const BidBoard& board) {
  BidDecision d;
  if (board.entries.empty()) {
    d.consensus = true;
    d.empty_board = true;
    return d;
  }
  SiteId leader = board.entries.begin()->first;
  double leader_error = board.entries.begin()->second;
  for (auto [s, err] : board.entries) {
    if (err > leader_error) {
      leader = s;
      leader_error = err;
    }
  }
  if (leader_error > board.updater_error)
    d.transfer = make_transaction(site.id, leader, Flag::Transfer, board.target, leader_error);
  else
    d.consensus = true;
  return d;
}

// Θ expired for the UPDATE this site posted. If a new-data TRANSFER already
// moved the right elsewhere the window simply closes.
inline BidDecision on_theta_expiry(SiteState& site, const Chain& chain) {
  BidDecision none;
  if (site.phase != Phase::AwaitingBids) return none;
  site.phase = Phase::Idle;
  auto update = find_update(chain, site.awaiting_hash);
  if (!update) throw ProtocolError("site " + std::to_string(site.id) + " lost track of its own UPDATE");
  for (std::size_t h = update->height + 1; h < chain.size(); ++h) {
    const Transaction& tx = chain[h].tx;
    if (tx.flag == Flag::Transfer && tx.model_hash == update->model_hash) return none;
  }
  return decide_bid(site, make_bid_board(chain, *update));
}

// A new site, or a site with new rows, scores the latest model
// on all of its data and claims the update right only if its error strictly
// exceeds the error the latest updater reported. The TRANSFER is recorded as
// from the latest updater to this site.
inline std::optional<Transaction> poi_new(SiteState& site, const Chain& chain, Learner& learner) {
  if (!site.pending_new_data) return std::nullopt;
  auto latest = latest_update(chain);
  if (!latest) return std::nullopt;  // network still initializing; keep the flag
  site.pending_new_data = false;
  site.evaluated.insert(latest->model_hash);
  Model model = deserialize_model(latest->model_bytes);
  EvalContext ctx{site.id, count_updates(chain, latest->height), site.data_version};
  double err = learner.evaluate(model, site.data, ctx);
  if (!(err > latest->error)) return std::nullopt;
  return make_transaction(latest->from_site, site.id, Flag::Transfer, latest->model_hash, err);
}

// Checked after every UPDATE. Threshold wins over TTL when both fire.
inline std::optional<StopReason> check_stop(std::uint64_t update_count, double latest_error,
                                            const ProtocolConfig& cfg) {
  if (cfg.error_threshold && latest_error <= *cfg.error_threshold) return StopReason::Threshold;
  if (cfg.max_iterations && update_count >= *cfg.max_iterations) return StopReason::Ttl;
  return std::nullopt;
}

}  // namespace modelchain
