#include <gtest/gtest.h>

#include <random>

#include "modelchain/chain_dump.hpp"
#include "modelchain/simnet.hpp"
#include "test_support.hpp"

namespace mc = modelchain;
namespace mt = modelchain::testing;
using mc::EventKind;
using mc::Flag;

namespace {

mc::RunOutcome run(mc::World& w) { return w.run_until_stop(); }

// Checks the bid-winner, single-updater and error-propagation laws on a
// run without lifecycle events.
void check_round_laws(const mc::Chain& chain, const mc::ScriptedLearner& l) {
  std::vector<std::uint64_t> updates;
  for (std::size_t h = 1; h < chain.size(); ++h)
    if (chain[h].tx.flag == Flag::Update) updates.push_back(h);
  for (std::size_t k = 1; k < updates.size(); ++k) {
    std::uint64_t prev = updates[k - 1], cur = updates[k];
    std::vector<std::uint64_t> transfers;
    for (std::uint64_t h = prev + 1; h < cur; ++h)
      if (chain[h].tx.flag == Flag::Transfer) transfers.push_back(h);
    ASSERT_EQ(transfers.size(), 1u) << "between UPDATEs at " << prev << " and " << cur;
    const auto& t = chain[transfers[0]].tx;
    const auto& u = chain[cur].tx;
    EXPECT_EQ(t.to_site, u.from_site);
    EXPECT_EQ(t.from_site, chain[prev].tx.from_site);
    EXPECT_EQ(t.model_hash, chain[prev].tx.model_hash);

    // argmax of the bids, lowest id on ties, strictly above the updater
    std::optional<mc::SiteId> best;
    double best_err = -1;
    for (const auto& e : mc::collect_evaluations(chain, chain[prev].tx.model_hash, prev)) {
      if (e.site == chain[prev].tx.from_site) continue;
      if (e.error > best_err) {
        best = e.site;
        best_err = e.error;
      }
    }
    ASSERT_TRUE(best);
    EXPECT_EQ(*best, t.to_site);
    EXPECT_EQ(best_err, t.error);
    EXPECT_GT(best_err, chain[prev].tx.error);

    // published error is what the learner reported for this round
    auto it = l.table().find({u.from_site, k + 1, 0});
    ASSERT_NE(it, l.table().end());
    EXPECT_EQ(u.error, it->second);
  }
}

void check_consensus_law(const mc::Chain& chain, const mc::RunOutcome& out) {
  if (out.stop_reason != mc::StopReason::Consensus) return;
  const auto& u = chain[out.consensus_height].tx;
  ASSERT_EQ(u.flag, Flag::Update);
  for (const auto& e : mc::collect_evaluations(chain, u.model_hash, out.consensus_height))
    if (e.site != u.from_site) { EXPECT_LE(e.error, u.error); }
  for (std::size_t h = out.consensus_height + 1; h < chain.size(); ++h) EXPECT_NE(chain[h].tx.flag, Flag::Update);
}

mc::ScriptedLearner random_table(std::uint32_t n, std::uint64_t rounds, std::mt19937_64& rng) {
  mc::ScriptedLearner l;
  for (mc::SiteId s = 1; s <= n; ++s)
    for (std::uint64_t t = 0; t <= rounds; ++t) l.set(s, t, static_cast<double>(rng() % 21) / 20.0);
  return l;
}

}  // namespace

TEST(EventQueue, TotalOrder) {
  mc::EventQueue q;
  q.push({5, EventKind::ThetaExpiry, 1, 0, {}, {}});
  q.push({5, EventKind::Poll, 2, 0, {}, {}});
  q.push({5, EventKind::Poll, 1, 0, {}, {}});
  q.push({5, EventKind::NewData, 3, 0, {}, {}});
  q.push({5, EventKind::Join, 4, 0, {}, {}});
  q.push({5, EventKind::Leave, 9, 0, {}, {}});
  q.push({4, EventKind::ThetaExpiry, 9, 0, {}, {}});
  q.push({5, EventKind::Poll, 1, 0, {}, {}});
  std::vector<std::tuple<std::uint64_t, EventKind, mc::SiteId, std::uint64_t>> got;
  while (!q.empty()) {
    auto e = q.pop();
    got.emplace_back(e.tick, e.kind, e.site, e.seq);
  }
  decltype(got) expected{{4, EventKind::ThetaExpiry, 9, 6}, {5, EventKind::Leave, 9, 5},
                         {5, EventKind::Join, 4, 4},        {5, EventKind::NewData, 3, 3},
                         {5, EventKind::Poll, 1, 2},        {5, EventKind::Poll, 1, 7},
                         {5, EventKind::Poll, 2, 1},        {5, EventKind::ThetaExpiry, 1, 0}};
  EXPECT_EQ(got, expected);
}

TEST(EventQueueProperty, PopsStrictlyIncreasingKeys) {
  std::mt19937_64 rng(1);
  mc::EventQueue q;
  for (int i = 0; i < 500; ++i)
    q.push({rng() % 20, static_cast<EventKind>(rng() % 5), static_cast<mc::SiteId>(rng() % 4), 0, {}, {}});
  auto last = q.pop().key();
  while (!q.empty()) {
    auto k = q.pop().key();
    EXPECT_LT(last, k);
    last = k;
  }
}

TEST(World, WalkthroughSequence) {
  auto l = mt::walkthrough_learner();
  auto w = mt::make_world(mt::small_config(4), l);
  auto out = run(w);
  EXPECT_EQ(mt::flag_steps(w.chain()), mt::walkthrough_expected());
  EXPECT_EQ(out.stop_reason, mc::StopReason::Consensus);
  EXPECT_EQ(out.iterations, 4u);
  EXPECT_EQ(out.consensus_height, 21u);
  EXPECT_EQ(out.consensus_model.origin_site, 4u);
  EXPECT_EQ(mc::latest_update(w.chain())->from_site, 4u);
  EXPECT_EQ(mc::latest_update(w.chain())->error, 0.2);
  EXPECT_TRUE(mc::verify_chain(w.chain()).valid());
  EXPECT_TRUE(out.warnings.empty());
  check_round_laws(w.chain(), l);
  check_consensus_law(w.chain(), out);
}

TEST(World, TransferErrorsFollowTheBids) {
  auto l = mt::walkthrough_learner();
  auto w = mt::make_world(mt::small_config(4), l);
  run(w);
  std::vector<double> transfer_errors;
  for (const auto& b : w.chain().blocks())
    if (b.height > 0 && b.tx.flag == Flag::Transfer) transfer_errors.push_back(b.tx.error);
  EXPECT_EQ(transfer_errors, (std::vector<double>{0.2, 0.7, 0.6, 0.3}));
}

TEST(World, NewDataReopensAfterConsensus) {
  auto l = mt::walkthrough_learner();
  l.set(1, 4, 0.4, 1);
  l.set(1, 5, 0.15, 1);
  l.set(2, 5, 0.1);
  l.set(3, 5, 0.1);
  l.set(4, 5, 0.12);
  auto w = mt::make_world(mt::small_config(4), l);
  w.schedule_new_data(20, 1, {});
  auto out = run(w);
  auto steps = mt::flag_steps(w.chain());
  auto base = mt::walkthrough_expected();
  ASSERT_GT(steps.size(), base.size());
  EXPECT_TRUE(std::equal(base.begin(), base.end(), steps.begin()));
  EXPECT_EQ(steps[base.size()], (mt::FlagStep{Flag::Transfer, 4, 1}));
  EXPECT_EQ(w.chain()[base.size() + 1].tx.error, 0.4);
  EXPECT_EQ(steps[base.size() + 1], (mt::FlagStep{Flag::Update, 1, 1}));
  EXPECT_EQ(out.iterations, 5u);
  EXPECT_EQ(out.stop_reason, mc::StopReason::Consensus);
  EXPECT_EQ(out.consensus_model.origin_site, 1u);
}

TEST(World, NewDataBelowUpdaterErrorIsSilent) {
  auto l = mt::walkthrough_learner();
  l.set(1, 4, 0.1, 1);
  auto w = mt::make_world(mt::small_config(4), l);
  w.schedule_new_data(20, 1, {});
  auto out = run(w);
  EXPECT_EQ(mt::flag_steps(w.chain()), mt::walkthrough_expected());
  EXPECT_EQ(out.iterations, 4u);
  EXPECT_EQ(out.stop_reason, mc::StopReason::Consensus);
}

TEST(World, SingleSite) {
  mc::ScriptedLearner l;
  l.set(1, 0, 0.35);
  auto w = mt::make_world(mt::small_config(1), l);
  auto out = run(w);
  auto expected = std::vector<mt::FlagStep>{{Flag::Initialize, 1, 1}, {Flag::Transfer, 1, 1}, {Flag::Update, 1, 1}};
  EXPECT_EQ(mt::flag_steps(w.chain()), expected);
  EXPECT_EQ(out.stop_reason, mc::StopReason::Consensus);
  EXPECT_EQ(out.iterations, 1u);
  EXPECT_TRUE(out.warnings.empty());
}

TEST(World, MaxIterationsOne) {
  auto l = mt::walkthrough_learner();
  auto cfg = mt::small_config(4);
  cfg.max_iterations = 1;
  auto w = mt::make_world(cfg, l);
  auto out = run(w);
  EXPECT_EQ(out.stop_reason, mc::StopReason::Ttl);
  EXPECT_EQ(mc::count_updates(w.chain()), 1u);
  EXPECT_EQ(w.chain().tip().tx.flag, Flag::Update);
}

TEST(World, FoundingCountMustMatch) {
  mc::ScriptedLearner l;
  mc::World w(mt::small_config(2), l);
  w.add_site(1, {});
  EXPECT_THROW(w.run_until_stop(), mc::ConfigError);
  EXPECT_THROW(w.add_site(1, {}), mc::SimulationError);
  EXPECT_THROW(w.add_site(0, {}), mc::SimulationError);
}

TEST(World, IdleSiteDepartureKeepsHandoffs) {
  auto base_l = mt::walkthrough_learner();
  auto base = mt::make_world(mt::small_config(4), base_l);
  run(base);

  auto l = mt::walkthrough_learner();
  auto w = mt::make_world(mt::small_config(4), l);
  w.schedule_leave(4, 1);  // after its model was handed to site 2
  auto out = run(w);
  EXPECT_EQ(mt::handoff_steps(w.chain()), mt::handoff_steps(base.chain()));
  EXPECT_EQ(out.stop_reason, mc::StopReason::Consensus);
  EXPECT_TRUE(mc::verify_chain(w.chain()).valid());
  for (std::size_t h = 1; h < w.chain().size(); ++h)
    if (w.chain()[h].tx.from_site == 1) { EXPECT_LT(h, 11u); }
}

TEST(World, PendingUpdaterDepartureStalls) {
  auto l = mt::walkthrough_learner();
  auto w = mt::make_world(mt::small_config(4), l);
  w.schedule_leave(4, 2);  // holds the transfer from tick 3, never acts on it
  auto out = run(w);
  EXPECT_EQ(out.stop_reason, mc::StopReason::Stalled);
  auto latest = mc::latest_update(w.chain());
  ASSERT_TRUE(latest);
  EXPECT_EQ(latest->height, 6u);
  EXPECT_EQ(latest->from_site, 1u);
  EXPECT_EQ(out.consensus_height, 6u);
  EXPECT_EQ(w.chain().tip().tx.flag, Flag::Transfer);
  EXPECT_TRUE(mc::verify_chain(w.chain()).valid());
}

TEST(World, RejoinGoesThroughNewSiteBid) {
  auto l = mt::walkthrough_learner();
  l.set(2, 1, 0.7, 1);
  l.set(2, 2, 0.3, 1);
  l.set(2, 3, 0.2, 1);
  l.set(2, 4, 0.15, 1);
  auto w = mt::make_world(mt::small_config(4), l);
  w.schedule_leave(4, 2);
  w.schedule_join(6, 2, {});
  auto out = run(w);
  // the returning site wins the right back from site 1's model
  std::optional<std::size_t> claim;
  for (std::size_t h = 11; h < w.chain().size(); ++h) {  // 10 is the transfer it walked away from
    const auto& tx = w.chain()[h].tx;
    if (tx.flag == Flag::Transfer && tx.to_site == 2) {
      claim = h;
      break;
    }
  }
  ASSERT_TRUE(claim);
  EXPECT_EQ(w.chain()[*claim].tx.from_site, 1u);
  EXPECT_EQ(w.chain()[*claim].tx.error, 0.7);
  EXPECT_EQ(w.chain()[*claim + 1].tx.flag, Flag::Update);
  EXPECT_EQ(w.chain()[*claim + 1].tx.from_site, 2u);
  EXPECT_EQ(out.stop_reason, mc::StopReason::Consensus);
  EXPECT_EQ(out.iterations, 4u);
  EXPECT_TRUE(mc::verify_chain(w.chain()).valid());
}

TEST(World, JoinDuringInitializationRejected) {
  auto l = mt::walkthrough_learner();
  auto w = mt::make_world(mt::small_config(4), l);
  EXPECT_THROW(w.site_join(7, {}), mc::JoinRejected);
  w.schedule_join(0, 7, {});
  auto out = run(w);
  ASSERT_EQ(out.warnings.size(), 1u);
  EXPECT_NE(out.warnings[0].find("initializing"), std::string::npos);
  EXPECT_EQ(mt::flag_steps(w.chain()), mt::walkthrough_expected());
}

TEST(World, LifecycleErrors) {
  mc::ScriptedLearner l;
  l.set(1, 0, 0.1);
  mc::World w(mt::small_config(1), l);
  w.add_site(1, mc::Partition{{{{1.0, 2.0}, 1}}});
  EXPECT_THROW(w.inject_new_data(1, mc::Partition{{{{1.0}, 0}}}), mc::SimulationError);
  EXPECT_THROW(w.inject_new_data(2, {}), mc::SimulationError);
  EXPECT_THROW(w.site_leave(3), mc::SimulationError);
  EXPECT_NO_THROW(w.inject_new_data(1, mc::Partition{{{{3.0, 4.0}, 0}}}));
  EXPECT_EQ(w.sites().at(1).data.size(), 2u);
  EXPECT_EQ(w.sites().at(1).data_version, 1u);
}

TEST(World, DeterministicDumps) {
  auto once = [] {
    auto l = mt::walkthrough_learner();
    auto w = mt::make_world(mt::small_config(4), l);
    w.run_until_stop();
    return std::pair(mc::dump_chain(w.chain()), mc::dump_trace(w.trace()));
  };
  EXPECT_EQ(once(), once());
}

TEST(World, ChainValidAfterEveryStep) {
  auto l = mt::walkthrough_learner();
  auto w = mt::make_world(mt::small_config(4), l);
  for (int i = 0; i < 60 && w.step(); ++i) ASSERT_TRUE(mc::verify_chain(w.chain()).valid()) << "step " << i;
}

TEST(World, TraceMatchesChain) {
  auto l = mt::walkthrough_learner();
  auto w = mt::make_world(mt::small_config(4), l);
  auto out = run(w);
  EXPECT_EQ(mc::reconstruct_trace(w.chain()), out.transfer_trace);
  auto stop = mc::stop_record(w.trace());
  ASSERT_TRUE(stop);
  EXPECT_EQ(stop->height, out.consensus_height);
  EXPECT_EQ(stop->reason, out.stop_reason);
}

// Random scripted tables, including ties, against every protocol law.
TEST(WorldProperty, ProtocolLawsOnRandomTables) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 40; ++trial) {
    std::uint32_t n = 2 + static_cast<std::uint32_t>(rng() % 4);
    std::uint64_t rounds = 8;
    auto l = random_table(n, rounds, rng);
    auto cfg = mt::small_config(n, 2);
    cfg.max_iterations = rounds;
    auto w = mt::make_world(cfg, l);
    auto out = run(w);
    SCOPED_TRACE("trial " + std::to_string(trial));
    EXPECT_NE(out.stop_reason, mc::StopReason::Stalled);
    EXPECT_TRUE(mc::verify_chain(w.chain()).valid());
    EXPECT_EQ(mc::reconstruct_trace(w.chain()), out.transfer_trace);
    check_round_laws(w.chain(), l);
    check_consensus_law(w.chain(), out);

    // first UPDATE: the init winner's model at its init error
    std::optional<mc::SiteId> winner;
    double best = 2;
    for (mc::SiteId s = 1; s <= n; ++s) {
      double e = l.table().at({s, 0, 0});
      if (e < best) {
        best = e;
        winner = s;
      }
    }
    auto first = mc::update_at(w.chain(), n + 2);
    ASSERT_TRUE(first);
    EXPECT_EQ(first->from_site, *winner);
    EXPECT_EQ(first->error, best);
  }
}

// Departures of sites that never hold the right leave the chain valid and,
// if the leaver never wins a bid, the handoffs unchanged.
TEST(WorldProperty, DepartureSafety) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 30; ++trial) {
    auto l = mt::walkthrough_learner();
    auto w = mt::make_world(mt::small_config(4), l);
    mc::SiteId leaver = 1 + static_cast<mc::SiteId>(rng() % 4);
    std::uint64_t tick = 2 + rng() % 12;  // after the first UPDATE
    w.schedule_leave(tick, leaver);
    auto out = run(w);
    SCOPED_TRACE("site " + std::to_string(leaver) + " leaves at " + std::to_string(tick));
    EXPECT_TRUE(mc::verify_chain(w.chain()).valid());
    EXPECT_EQ(mc::reconstruct_trace(w.chain()), out.transfer_trace);
    auto latest = mc::latest_update(w.chain());
    ASSERT_TRUE(latest);
    EXPECT_EQ(out.consensus_height, latest->height);
    for (const auto& b : w.chain().blocks()) {
      if (b.height == 0) continue;
      auto it = std::find_if(w.trace().begin(), w.trace().end(), [&](const mc::TraceRecord& r) {
        auto* tx = std::get_if<mc::TxRecord>(&r);
        return tx && tx->entry.height == b.height;
      });
      ASSERT_NE(it, w.trace().end());
      if (b.tx.from_site == leaver) { EXPECT_LT(std::get<mc::TxRecord>(*it).tick, tick); }
    }
  }
}
