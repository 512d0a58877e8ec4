#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>

#include "modelchain/chain_dump.hpp"
#include "modelchain/harness/config.hpp"
#include "modelchain/harness/dataset.hpp"
#include "modelchain/harness/io.hpp"
#include "modelchain/simnet.hpp"
#include "modelchain/trace.hpp"

namespace modelchain::harness {

struct Report {
  StopReason stop_reason = StopReason::Consensus;
  std::uint64_t iterations = 0;
  std::map<SiteId, double> init_errors;
  std::optional<double> holdout_error;
  std::uint64_t chain_length = 0;
  std::optional<double> wall_seconds;  // only known to the process that ran it
};

// Everything but wall time comes from the chain and the trace's stop record.
inline Report build_report(const Chain& chain, const StopRecord& stop) {
  Report r;
  r.stop_reason = stop.reason;
  r.iterations = count_updates(chain);
  r.holdout_error = stop.holdout_error;
  r.chain_length = chain.size();
  for (const Block& b : chain.blocks())
    if (b.tx.flag == Flag::Initialize) r.init_errors.try_emplace(b.tx.from_site, b.tx.error);
  return r;
}

inline void print_report(std::ostream& os, const Report& r) {
  os << "stop reason:      " << to_string(r.stop_reason) << '\n';
  os << "iterations:       " << r.iterations << '\n';
  os << "chain length:     " << r.chain_length << " blocks\n";
  os << "init errors:     ";
  if (r.init_errors.empty()) os << " (none)";
  for (auto [site, err] : r.init_errors) os << " S" << site << '=' << err;
  os << '\n';
  os << "holdout error:    ";
  if (r.holdout_error)
    os << *r.holdout_error << '\n';
  else
    os << "n/a\n";
  if (r.wall_seconds) os << "wall time:        " << *r.wall_seconds << " s\n";
}

struct ScenarioResult {
  RunOutcome outcome;
  Report report;
  Chain chain;
  std::vector<TraceRecord> trace;
  std::uint64_t dataset_learner_calls = 0;
};

struct OutputPaths {
  std::optional<std::filesystem::path> chain;
  std::optional<std::filesystem::path> trace;
};

namespace detail {

inline void persist(const World& world, const OutputPaths& out) {
  if (out.chain) write_file_atomic(*out.chain, dump_chain(world.chain()));
  if (out.trace) write_file_atomic(*out.trace, dump_trace(world.trace()));
}

}  // namespace detail

// Builds the world from the configuration, runs it to a stop, and persists
// the chain and trace. If the run throws, whatever was mined so far is still
// written before the error propagates.
inline ScenarioResult run_scenario(const ScenarioConfig& cfg, const OutputPaths& out = {}) {
  auto started = std::chrono::steady_clock::now();
  std::unique_ptr<Learner> learner;
  LogisticLearner* logistic = nullptr;
  Partitioned data;

  if (cfg.scripted()) {
    learner = std::make_unique<ScriptedLearner>(*cfg.scripted_errors);
    for (SiteId s = 1; s <= cfg.protocol.n_sites; ++s) data.sites[s] = Partition{};
  } else {
    auto owned = std::make_unique<LogisticLearner>(cfg.learner);
    logistic = owned.get();
    learner = std::move(owned);
    Partition pool = load_dataset(*cfg.dataset_path);
    std::size_t reserved = 0;
    for (const auto& ev : cfg.events) reserved += ev.rows;
    data = partition_horizontal(pool, cfg.partition, cfg.protocol.n_sites, cfg.holdout_fraction, cfg.protocol.seed,
                                reserved);
  }

  World world(cfg.protocol, *learner);
  for (auto& [site, part] : data.sites) world.add_site(site, part);
  std::size_t next_reserve = 0;
  auto draw = [&](std::size_t n) {
    Partition p;
    for (std::size_t i = 0; i < n; ++i) p.rows.push_back(data.reserve.rows[next_reserve++]);
    return p;
  };
  for (const auto& ev : cfg.events) {
    switch (ev.kind) {
      case LifecycleKind::Join: world.schedule_join(ev.tick, ev.site, draw(ev.rows)); break;
      case LifecycleKind::Leave: world.schedule_leave(ev.tick, ev.site); break;
      case LifecycleKind::NewData: world.schedule_new_data(ev.tick, ev.site, draw(ev.rows)); break;
    }
  }

  RunOutcome outcome;
  try {
    outcome = world.run_until_stop();
  } catch (...) {
    detail::persist(world, out);
    throw;
  }

  std::optional<double> holdout_error;
  if (!cfg.scripted() && !data.holdout.empty()) holdout_error = evaluate(outcome.consensus_model, data.holdout);
  auto& trace = world.mutable_trace();
  std::get<StopRecord>(trace.back()).holdout_error = holdout_error;
  detail::persist(world, out);

  ScenarioResult result{outcome, build_report(world.chain(), std::get<StopRecord>(trace.back())), world.chain(),
                        trace, logistic ? logistic->calls() : 0};
  result.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace modelchain::harness
