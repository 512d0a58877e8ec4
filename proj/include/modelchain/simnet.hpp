#pragma once

// Deterministic discrete-event driver for a ModelChain network.
//
// Time is an integer tick. Every site polls the chain every Δ ticks; an
// updater's bid window closes Θ ticks after it publishes. Transactions are
// mined and appended the moment a handler emits them, so the chain is the
// only channel between sites and never forks.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "modelchain/errors.hpp"
#include "modelchain/ledger.hpp"
#include "modelchain/protocol.hpp"
#include "modelchain/trace.hpp"

namespace modelchain {

// Same-tick events run in this order.
enum class EventKind : std::uint8_t { Leave = 0, Join = 1, NewData = 2, Poll = 3, ThetaExpiry = 4 };

struct Event {
  std::uint64_t tick = 0;
  EventKind kind = EventKind::Poll;
  SiteId site = 0;
  std::uint64_t seq = 0;
  Partition rows;     // Join: the site's data; NewData: rows to append
  Digest model_hash;  // ThetaExpiry: the UPDATE whose window closes

  auto key() const { return std::tuple(tick, kind, site, seq); }
};

struct EventOrder {
  bool operator()(const Event& a, const Event& b) const { return a.key() < b.key(); }
};

// Total order on (tick, kind, site, seq); seq is unique per queue.
class EventQueue {
 public:
  const Event& push(Event e) {
    e.seq = next_seq_++;
    return *events_.insert(std::move(e)).first;
  }

  Event pop() {
    auto node = events_.extract(events_.begin());
    return std::move(node.value());
  }

  bool empty() const noexcept { return events_.empty(); }
  std::size_t size() const noexcept { return events_.size(); }
  const Event& top() const { return *events_.begin(); }

  template <typename Pred>
  void erase_if(Pred pred) {
    std::erase_if(events_, pred);
  }

  template <typename Pred>
  bool any(Pred pred) const {
    for (const Event& e : events_)
      if (pred(e)) return true;
    return false;
  }

  const std::set<Event, EventOrder>& events() const noexcept { return events_; }

 private:
  std::set<Event, EventOrder> events_;
  std::uint64_t next_seq_ = 0;
};

class JoinRejected : public SimulationError {
 public:
  using SimulationError::SimulationError;
};

struct RunOutcome {
  Model consensus_model;
  std::uint64_t consensus_height = 0;
  StopReason stop_reason = StopReason::Consensus;
  std::uint64_t iterations = 0;            // UPDATE transactions on-chain
  std::vector<TraceEntry> transfer_trace;  // as recorded live
  std::uint64_t final_tick = 0;
  std::vector<std::string> warnings;
};

class World {
 public:
  World(ProtocolConfig cfg, Learner& learner) : cfg_((cfg.validate(), cfg)), learner_(&learner), chain_(cfg.difficulty) {}

  // Registers one of the N founding sites; they all poll first at tick 0.
  void add_site(SiteId id, Partition data) {
    if (started_) throw SimulationError("founding sites must be added before the run starts");
    if (sites_.contains(id)) throw SimulationError("duplicate site id " + std::to_string(id));
    if (id == 0) throw SimulationError("site id 0 is reserved for the genesis block");
    sites_.emplace(id, SiteState::initial(id, std::move(data)));
    versions_[id] = 0;
    queue_.push(Event{0, EventKind::Poll, id, 0, {}, {}});
  }

  void schedule_join(std::uint64_t tick, SiteId site, Partition data) {
    schedule(Event{tick, EventKind::Join, site, 0, std::move(data), {}});
  }
  void schedule_leave(std::uint64_t tick, SiteId site) { schedule(Event{tick, EventKind::Leave, site, 0, {}, {}}); }
  void schedule_new_data(std::uint64_t tick, SiteId site, Partition rows) {
    schedule(Event{tick, EventKind::NewData, site, 0, std::move(rows), {}});
  }

  // A site joins after initialization and runs the new-site bid at its next
  // poll. Joining while the founding sites are still initializing is
  // rejected, since initialization waits on a fixed N.
  void site_join(SiteId site, Partition data) {
    if (site == 0) throw SimulationError("site id 0 is reserved for the genesis block");
    if (sites_.contains(site)) throw SimulationError("site " + std::to_string(site) + " is already active");
    if (!latest_update(chain_))
      throw JoinRejected("site " + std::to_string(site) + " cannot join while the network is initializing");
    check_rows(site, data);
    SiteState s = SiteState::initial(site, std::move(data));
    s.initialized = true;
    s.pending_new_data = true;
    s.acted_height = chain_.size() - 1;  // transfers addressed to a previous incarnation are void
    s.data_version = ++versions_[site];
    sites_.emplace(site, std::move(s));
    schedule_poll(site, next_poll_tick(tick_));
    lifecycle("join", site);
  }

  // Removes the site and its pending polls/deadlines. If it held the update
  // right, the chain simply keeps the previous UPDATE as the latest model.
  void site_leave(SiteId site) {
    if (sites_.erase(site) == 0) throw SimulationError("unknown site " + std::to_string(site));
    queue_.erase_if([site](const Event& e) {
      return e.site == site && (e.kind == EventKind::Poll || e.kind == EventKind::ThetaExpiry);
    });
    lifecycle("leave", site);
  }

  void inject_new_data(SiteId site, Partition rows) {
    auto it = sites_.find(site);
    if (it == sites_.end()) throw SimulationError("new data for inactive site " + std::to_string(site));
    check_rows(site, rows, it->second.data.feature_count());
    auto& data = it->second.data.rows;
    data.insert(data.end(), std::make_move_iterator(rows.rows.begin()), std::make_move_iterator(rows.rows.end()));
    it->second.data_version = ++versions_[site];
    it->second.pending_new_data = true;
    lifecycle("new_data", site);
  }

  // Processes one event. Returns false when the queue is empty.
  bool step() {
    if (queue_.empty()) return false;
    start();
    Event ev = queue_.pop();
    tick_ = ev.tick;
    switch (ev.kind) {
      case EventKind::Leave: site_leave(ev.site); break;
      case EventKind::Join:
        try {
          site_join(ev.site, std::move(ev.rows));
        } catch (const JoinRejected& e) {
          warnings_.push_back(std::string("tick ") + std::to_string(tick_) + ": " + e.what());
        }
        break;
      case EventKind::NewData: inject_new_data(ev.site, std::move(ev.rows)); break;
      case EventKind::Poll: handle_poll(ev.site); break;
      case EventKind::ThetaExpiry: handle_theta(ev.site, ev.model_hash); break;
    }
    return true;
  }

  // Steps until a stop rule fires, consensus is reached with nothing left
  // that could reopen it, or the network can make no further progress.
  RunOutcome run_until_stop() {
    start();
    std::optional<StopReason> reason;
    while (!reason) {
      if (stop_) {
        reason = stop_;
      } else if (consensus_settled()) {
        reason = StopReason::Consensus;
      } else if (stalled()) {
        reason = StopReason::Stalled;
      } else if (!step()) {
        if (updates_ == 0) throw ConfigError("event queue exhausted before any UPDATE was published");
        warnings_.push_back("event queue exhausted");
        reason = StopReason::Stalled;
      }
    }
    return finish(*reason);
  }

  const ProtocolConfig& config() const noexcept { return cfg_; }
  const Chain& chain() const noexcept { return chain_; }
  std::uint64_t tick() const noexcept { return tick_; }
  const std::map<SiteId, SiteState>& sites() const noexcept { return sites_; }
  const EventQueue& queue() const noexcept { return queue_; }
  const std::vector<TraceRecord>& trace() const noexcept { return trace_; }
  std::vector<TraceRecord>& mutable_trace() noexcept { return trace_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }
  std::uint64_t iterations() const noexcept { return updates_; }
  std::optional<std::uint64_t> consensus_height() const noexcept { return consensus_height_; }

 private:
  void start() {
    if (started_) return;
    if (sites_.size() != cfg_.n_sites)
      throw ConfigError("protocol.n_sites is " + std::to_string(cfg_.n_sites) + " but " +
                        std::to_string(sites_.size()) + " founding sites were added");
    started_ = true;
  }

  void schedule(Event e) {
    if (e.tick < tick_) throw SimulationError("cannot schedule an event in the past");
    queue_.push(std::move(e));
  }

  std::uint64_t next_poll_tick(std::uint64_t from) const { return (from + cfg_.delta - 1) / cfg_.delta * cfg_.delta; }

  void schedule_poll(SiteId site, std::uint64_t tick) { queue_.push(Event{tick, EventKind::Poll, site, 0, {}, {}}); }

  void schedule_theta(const SiteState& s) {
    queue_.push(Event{s.deadline_tick, EventKind::ThetaExpiry, s.id, 0, {}, s.awaiting_hash});
  }

  void check_rows(SiteId site, const Partition& rows, std::size_t expected = 0) const {
    for (const Row& r : rows.rows) {
      if (expected == 0) expected = r.x.size();
      if (r.x.size() != expected)
        throw SimulationError("dimension mismatch in rows for site " + std::to_string(site) + ": expected " +
                              std::to_string(expected) + " features, got " + std::to_string(r.x.size()));
    }
  }

  void lifecycle(const char* event, SiteId site) {
    trace_.emplace_back(LifecycleRecord{tick_, event, site});
    last_activity_ = tick_;
  }

  void commit(Transaction tx) {
    const Block& b = chain_.commit(std::move(tx));
    trace_.emplace_back(TxRecord{tick_, entry_of(b)});
    last_activity_ = tick_;
    if (b.tx.flag == Flag::Update) {
      ++updates_;
      consensus_height_.reset();
      if (auto r = check_stop(updates_, b.tx.error, cfg_)) stop_ = r;
    }
  }

  // One poll runs the site's steps in order, committing after each.
  void handle_poll(SiteId id) {
    auto it = sites_.find(id);
    if (it == sites_.end()) return;
    SiteState& s = it->second;
    schedule_poll(id, tick_ + cfg_.delta);

    if (auto tx = poi_initialize(s, chain_, *learner_)) commit(std::move(*tx));
    if (stop_) return;
    if (auto tx = poi_await_initialization(s, chain_, cfg_)) {
      commit(std::move(*tx));
      if (stop_) return;
      commit(publish_initial_model(s, cfg_, tick_));
      schedule_theta(s);
      if (stop_) return;
    }
    if (auto tx = poi_new(s, chain_, *learner_)) commit(std::move(*tx));
    if (stop_) return;
    if (auto tx = on_poll(s, chain_, *learner_)) commit(std::move(*tx));
    if (stop_) return;
    if (auto h = pending_transfer(s, chain_)) {
      commit(on_transfer_received(s, chain_, *h, *learner_, cfg_, tick_));
      schedule_theta(s);
    }
  }

  void handle_theta(SiteId id, const Digest& hash) {
    auto it = sites_.find(id);
    if (it == sites_.end()) return;
    SiteState& s = it->second;
    if (s.phase != Phase::AwaitingBids || s.awaiting_hash != hash) return;
    BidDecision d = on_theta_expiry(s, chain_);
    if (d.transfer) commit(std::move(*d.transfer));
    if (d.consensus) {
      consensus_height_ = find_update(chain_, hash)->height;
      if (d.empty_board && sites_.size() > 1)
        warnings_.push_back("tick " + std::to_string(tick_) + ": no bids for the UPDATE at height " +
                            std::to_string(*consensus_height_) + "; treating it as consensus");
    }
  }

  bool lifecycle_pending() const {
    return queue_.any([](const Event& e) { return e.kind == EventKind::Join || e.kind == EventKind::NewData; });
  }

  bool data_pending() const {
    for (const auto& [id, s] : sites_)
      if (s.pending_new_data) return true;
    return false;
  }

  bool consensus_settled() const { return consensus_height_ && !data_pending() && !lifecycle_pending(); }

  // No event that could produce a block is in reach: no open bid window, no
  // pending lifecycle change, and the chain has been quiet for longer than a
  // healthy round ever takes.
  bool stalled() {
    if (queue_.empty()) return false;
    if (queue_.top().tick > cfg_.max_ticks) {
      warnings_.push_back("tick horizon " + std::to_string(cfg_.max_ticks) + " reached");
      return true;
    }
    if (consensus_height_ || data_pending() || lifecycle_pending()) return false;
    if (queue_.any([](const Event& e) { return e.kind == EventKind::ThetaExpiry; })) return false;
    return tick_ > last_activity_ + cfg_.theta + 2 * cfg_.delta;
  }

  RunOutcome finish(StopReason reason) {
    RunOutcome out;
    out.stop_reason = reason;
    out.iterations = updates_;
    out.final_tick = tick_;
    out.warnings = warnings_;
    out.transfer_trace = trace_entries(trace_);
    auto latest = latest_update(chain_);
    if (!latest) throw ConfigError("run stopped before any UPDATE was published");
    out.consensus_model = deserialize_model(latest->model_bytes);
    out.consensus_height = latest->height;
    StopRecord rec{tick_, reason, latest->height, updates_, std::nullopt};
    if (trace_.empty() || !std::holds_alternative<StopRecord>(trace_.back()) ||
        std::get<StopRecord>(trace_.back()) != rec)
      trace_.emplace_back(rec);
    return out;
  }

  ProtocolConfig cfg_;
  Learner* learner_;
  Chain chain_;
  std::uint64_t tick_ = 0;
  std::map<SiteId, SiteState> sites_;
  std::map<SiteId, std::uint32_t> versions_;
  EventQueue queue_;
  std::vector<TraceRecord> trace_;
  std::vector<std::string> warnings_;
  std::uint64_t updates_ = 0;
  std::uint64_t last_activity_ = 0;
  std::optional<StopReason> stop_;
  std::optional<std::uint64_t> consensus_height_;
  bool started_ = false;
};

}  // namespace modelchain
