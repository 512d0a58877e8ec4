#include <gtest/gtest.h>

#include "modelchain/protocol.hpp"

namespace mc = modelchain;
using mc::Flag;

namespace {

void post_init(mc::Chain& c, mc::SiteId s, double err) {
  c.commit(mc::make_transaction(s, s, Flag::Initialize, mc::hash_bytes(std::to_string(s)), err));
}

mc::Digest post_update(mc::Chain& c, mc::SiteId s, double err, std::uint32_t round = 1) {
  mc::Model m = mc::Model::zeros(1, s);
  m.round = round;
  return c.commit(mc::make_transaction(s, s, Flag::Update, mc::serialize_model(m), err)).tx.model_hash;
}

void post_eval(mc::Chain& c, mc::SiteId s, const mc::Digest& target, double err) {
  c.commit(mc::make_transaction(s, s, Flag::Evaluate, target, err));
}

mc::ProtocolConfig cfg_for(std::uint32_t n) {
  mc::ProtocolConfig cfg;
  cfg.n_sites = n;
  cfg.difficulty = 0;
  return cfg;
}

mc::BidBoard board(mc::SiteId updater, double updater_error, std::map<mc::SiteId, double> bids) {
  return mc::BidBoard{mc::hash_bytes("target"), updater, updater_error, std::move(bids)};
}

}  // namespace

TEST(InitWinner, LowestErrorWins) {
  mc::Chain c(0);
  post_init(c, 1, 0.2);
  post_init(c, 2, 0.5);
  post_init(c, 3, 0.4);
  EXPECT_FALSE(mc::init_winner(c, 4));
  post_init(c, 4, 0.6);
  EXPECT_EQ(mc::init_winner(c, 4), 1u);
}

TEST(InitWinner, TieGoesToLowestId) {
  mc::Chain c(0);
  post_init(c, 3, 0.3);
  post_init(c, 2, 0.3);
  post_init(c, 5, 0.4);
  EXPECT_EQ(mc::init_winner(c, 3), 2u);
}

TEST(InitWinner, SingleSite) {
  mc::Chain c(0);
  post_init(c, 9, 0.7);
  EXPECT_EQ(mc::init_winner(c, 1), 9u);
}

TEST(Initialization, WinnerPublishesLocalModelUnchanged) {
  mc::ScriptedLearner l;
  l.set(1, 0, 0.2);
  l.set(2, 0, 0.5);
  mc::Chain c(0);
  auto cfg = cfg_for(2);
  auto s1 = mc::SiteState::initial(1, {});
  auto s2 = mc::SiteState::initial(2, {});

  auto t1 = mc::poi_initialize(s1, c, l);
  ASSERT_TRUE(t1);
  EXPECT_EQ(t1->flag, Flag::Initialize);
  EXPECT_FALSE(t1->model_bytes);
  EXPECT_EQ(t1->error, 0.2);
  c.commit(*t1);
  EXPECT_FALSE(mc::poi_initialize(s1, c, l));
  EXPECT_FALSE(mc::poi_await_initialization(s1, c, cfg));  // still waiting on site 2

  c.commit(*mc::poi_initialize(s2, c, l));
  EXPECT_FALSE(mc::poi_await_initialization(s2, c, cfg));
  EXPECT_EQ(s2.phase, mc::Phase::Idle);

  auto self_transfer = mc::poi_await_initialization(s1, c, cfg);
  ASSERT_TRUE(self_transfer);
  EXPECT_EQ(self_transfer->flag, Flag::Transfer);
  EXPECT_EQ(self_transfer->from_site, 1u);
  EXPECT_EQ(self_transfer->to_site, 1u);
  c.commit(*self_transfer);

  auto update = mc::publish_initial_model(s1, cfg, 5);
  EXPECT_EQ(*update.model_bytes, mc::serialize_model(*s1.local_model));
  EXPECT_EQ(update.model_hash, t1->model_hash);
  EXPECT_EQ(update.error, 0.2);
  EXPECT_EQ(s1.phase, mc::Phase::AwaitingBids);
  EXPECT_EQ(s1.deadline_tick, 5 + cfg.theta);
}

TEST(Initialization, PublishRespectsBudget) {
  auto cfg = cfg_for(1);
  cfg.max_metadata_bytes = 16;
  auto s = mc::SiteState::initial(1, {});
  s.phase = mc::Phase::Updating;
  s.local_model = mc::Model::zeros(1, 1);
  EXPECT_THROW(mc::publish_initial_model(s, cfg, 0), mc::MetadataBudgetError);
  auto idle = mc::SiteState::initial(2, {});
  EXPECT_THROW(mc::publish_initial_model(idle, cfg_for(1), 0), mc::ProtocolError);
}

TEST(OnPoll, EvaluatesEachUpdateOnce) {
  mc::ScriptedLearner l;
  l.set(2, 1, 0.7);
  mc::Chain c(0);
  auto s2 = mc::SiteState::initial(2, {});
  EXPECT_FALSE(mc::on_poll(s2, c, l));
  mc::Digest h = post_update(c, 1, 0.2);

  auto tx = mc::on_poll(s2, c, l);
  ASSERT_TRUE(tx);
  EXPECT_EQ(tx->flag, Flag::Evaluate);
  EXPECT_EQ(tx->from_site, 2u);
  EXPECT_EQ(tx->to_site, 2u);
  EXPECT_EQ(tx->model_hash, h);
  EXPECT_EQ(tx->error, 0.7);
  c.commit(*tx);
  EXPECT_FALSE(mc::on_poll(s2, c, l));

  auto s1 = mc::SiteState::initial(1, {});
  EXPECT_FALSE(mc::on_poll(s1, c, l));  // the updater's own model
}

TEST(OnPoll, ContextCountsUpdates) {
  mc::ScriptedLearner l;
  l.set(3, 2, 0.45, 1);
  mc::Chain c(0);
  post_update(c, 1, 0.3, 1);
  post_update(c, 2, 0.3, 2);
  auto s3 = mc::SiteState::initial(3, {});
  s3.data_version = 1;
  auto tx = mc::on_poll(s3, c, l);
  ASSERT_TRUE(tx);
  EXPECT_EQ(tx->error, 0.45);
  auto s4 = mc::SiteState::initial(4, {});
  EXPECT_THROW(mc::on_poll(s4, c, l), mc::ConfigError);  // no scripted entry
}

TEST(DecideBid, NoHigherBidIsConsensus) {
  auto s4 = mc::SiteState::initial(4, {});
  auto d = mc::decide_bid(s4, board(4, 0.2, {{1, 0.1}, {2, 0.15}, {3, 0.1}}));
  EXPECT_TRUE(d.consensus);
  EXPECT_FALSE(d.transfer);
  EXPECT_FALSE(d.empty_board);
}

TEST(DecideBid, HighestBidderWins) {
  auto s3 = mc::SiteState::initial(3, {});
  auto d = mc::decide_bid(s3, board(3, 0.25, {{1, 0.1}, {2, 0.2}, {4, 0.3}}));
  ASSERT_TRUE(d.transfer);
  EXPECT_FALSE(d.consensus);
  EXPECT_EQ(d.transfer->flag, Flag::Transfer);
  EXPECT_EQ(d.transfer->from_site, 3u);
  EXPECT_EQ(d.transfer->to_site, 4u);
  EXPECT_EQ(d.transfer->error, 0.3);
  EXPECT_EQ(d.transfer->model_hash, mc::hash_bytes("target"));
}

TEST(DecideBid, EqualMaximumIsConsensus) {
  auto s1 = mc::SiteState::initial(1, {});
  auto d = mc::decide_bid(s1, board(1, 0.3, {{2, 0.3}, {3, 0.1}}));
  EXPECT_TRUE(d.consensus);
  EXPECT_FALSE(d.transfer);
}

TEST(DecideBid, TiedBiddersGoToLowestId) {
  auto s1 = mc::SiteState::initial(1, {});
  auto d = mc::decide_bid(s1, board(1, 0.1, {{5, 0.6}, {3, 0.6}, {4, 0.2}}));
  ASSERT_TRUE(d.transfer);
  EXPECT_EQ(d.transfer->to_site, 3u);
}

TEST(DecideBid, EmptyBoard) {
  auto s1 = mc::SiteState::initial(1, {});
  auto d = mc::decide_bid(s1, board(1, 0.4, {}));
  EXPECT_TRUE(d.consensus);
  EXPECT_TRUE(d.empty_board);
}

TEST(BidBoard, ExcludesUpdaterAndOlderBids) {
  mc::Chain c(0);
  mc::Digest h = post_update(c, 2, 0.3);
  post_eval(c, 1, h, 0.2);
  post_eval(c, 2, h, 0.9);  // updater cannot bid
  post_eval(c, 3, h, 0.6);
  auto u = mc::latest_update(c);
  auto b = mc::make_bid_board(c, *u);
  std::map<mc::SiteId, double> expected{{1, 0.2}, {3, 0.6}};
  EXPECT_EQ(b.entries, expected);
  EXPECT_EQ(b.updater, 2u);
  EXPECT_EQ(b.updater_error, 0.3);
}

TEST(ThetaExpiry, ClosesSilentlyAfterNewDataTransfer) {
  mc::Chain c(0);
  mc::Digest h = post_update(c, 4, 0.2);
  post_eval(c, 2, h, 0.9);
  c.commit(mc::make_transaction(4, 1, Flag::Transfer, h, 0.4));
  auto s4 = mc::SiteState::initial(4, {});
  s4.phase = mc::Phase::AwaitingBids;
  s4.awaiting_hash = h;
  auto d = mc::on_theta_expiry(s4, c);
  EXPECT_FALSE(d.transfer);
  EXPECT_FALSE(d.consensus);
  EXPECT_EQ(s4.phase, mc::Phase::Idle);
}

TEST(ThetaExpiry, DecidesFromBoard) {
  mc::Chain c(0);
  mc::Digest h = post_update(c, 1, 0.2);
  post_eval(c, 2, h, 0.7);
  post_eval(c, 3, h, 0.5);
  auto s1 = mc::SiteState::initial(1, {});
  s1.phase = mc::Phase::AwaitingBids;
  s1.awaiting_hash = h;
  auto d = mc::on_theta_expiry(s1, c);
  ASSERT_TRUE(d.transfer);
  EXPECT_EQ(d.transfer->to_site, 2u);
  EXPECT_EQ(d.transfer->error, 0.7);
  EXPECT_FALSE(mc::on_theta_expiry(s1, c).transfer);  // window already closed
}

TEST(PoiNew, HigherErrorClaimsTheRight) {
  mc::ScriptedLearner l;
  l.set(1, 1, 0.4, 1);
  mc::Chain c(0);
  mc::Digest h = post_update(c, 4, 0.2);
  auto s1 = mc::SiteState::initial(1, {});
  s1.data_version = 1;
  s1.pending_new_data = true;
  auto tx = mc::poi_new(s1, c, l);
  ASSERT_TRUE(tx);
  EXPECT_EQ(tx->flag, Flag::Transfer);
  EXPECT_EQ(tx->from_site, 4u);
  EXPECT_EQ(tx->to_site, 1u);
  EXPECT_EQ(tx->model_hash, h);
  EXPECT_EQ(tx->error, 0.4);
  EXPECT_FALSE(s1.pending_new_data);
  EXPECT_TRUE(s1.evaluated.contains(h));
}

TEST(PoiNew, LowerOrEqualErrorPostsNothing) {
  for (double e : {0.1, 0.2}) {
    mc::ScriptedLearner l;
    l.set(1, 1, e, 1);
    mc::Chain c(0);
    post_update(c, 4, 0.2);
    auto s1 = mc::SiteState::initial(1, {});
    s1.data_version = 1;
    s1.pending_new_data = true;
    std::size_t before = c.size();
    EXPECT_FALSE(mc::poi_new(s1, c, l)) << e;
    EXPECT_EQ(c.size(), before);
    EXPECT_FALSE(s1.pending_new_data);
  }
}

TEST(PoiNew, WaitsForFirstUpdate) {
  mc::ScriptedLearner l;
  mc::Chain c(0);
  auto s = mc::SiteState::initial(5, {});
  s.pending_new_data = true;
  EXPECT_FALSE(mc::poi_new(s, c, l));
  EXPECT_TRUE(s.pending_new_data);
}

TEST(PendingTransfer, OnlyLatestAddressedHereCounts) {
  mc::Chain c(0);
  auto s2 = mc::SiteState::initial(2, {});
  EXPECT_FALSE(mc::pending_transfer(s2, c));
  mc::Digest h = post_update(c, 1, 0.2);
  EXPECT_FALSE(mc::pending_transfer(s2, c));
  c.commit(mc::make_transaction(1, 2, Flag::Transfer, h, 0.7));
  auto at = mc::pending_transfer(s2, c);
  ASSERT_TRUE(at);
  EXPECT_EQ(*at, c.size() - 1);
  s2.acted_height = *at;
  EXPECT_FALSE(mc::pending_transfer(s2, c));
  s2.acted_height = 0;
  c.commit(mc::make_transaction(1, 3, Flag::Transfer, h, 0.8));
  EXPECT_FALSE(mc::pending_transfer(s2, c));
}

TEST(TransferReceived, UpdatesAndPublishes) {
  mc::ScriptedLearner l;
  l.set(2, 2, 0.3);
  mc::Chain c(0);
  mc::Digest h = post_update(c, 1, 0.2);
  c.commit(mc::make_transaction(1, 2, Flag::Transfer, h, 0.7));
  auto s2 = mc::SiteState::initial(2, {});
  auto cfg = cfg_for(2);
  auto tx = mc::on_transfer_received(s2, c, c.size() - 1, l, cfg, 7);
  EXPECT_EQ(tx.flag, Flag::Update);
  EXPECT_EQ(tx.from_site, 2u);
  EXPECT_EQ(tx.error, 0.3);
  auto model = mc::deserialize_model(*tx.model_bytes);
  EXPECT_EQ(model.round, 2u);
  EXPECT_EQ(model.origin_site, 2u);
  EXPECT_EQ(s2.phase, mc::Phase::AwaitingBids);
  EXPECT_EQ(s2.deadline_tick, 7 + cfg.theta);
  EXPECT_EQ(s2.acted_height, c.size() - 1);
}

TEST(TransferReceived, MissingModelIsIntegrityError) {
  mc::ScriptedLearner l;
  mc::Chain c(0);
  post_update(c, 1, 0.2);
  c.commit(mc::make_transaction(1, 2, Flag::Transfer, mc::hash_bytes("never published"), 0.7));
  auto s2 = mc::SiteState::initial(2, {});
  EXPECT_THROW(mc::on_transfer_received(s2, c, c.size() - 1, l, cfg_for(2), 0), mc::ProtocolError);
}

TEST(CheckStop, Rules) {
  mc::ProtocolConfig cfg;
  EXPECT_FALSE(mc::check_stop(100, 0.0, cfg));
  cfg.error_threshold = 0.25;
  EXPECT_FALSE(mc::check_stop(1, 0.3, cfg));
  EXPECT_EQ(mc::check_stop(1, 0.25, cfg), mc::StopReason::Threshold);
  cfg.max_iterations = 2;
  EXPECT_FALSE(mc::check_stop(1, 0.5, cfg));
  EXPECT_EQ(mc::check_stop(2, 0.5, cfg), mc::StopReason::Ttl);
  EXPECT_EQ(mc::check_stop(2, 0.1, cfg), mc::StopReason::Threshold);
}

TEST(Config, Validation) {
  auto bad = [](auto mutate) {
    mc::ProtocolConfig c;
    mutate(c);
    EXPECT_THROW(c.validate(), mc::ConfigError);
  };
  bad([](auto& c) { c.delta = 0; });
  bad([](auto& c) { c.theta = 0; });
  bad([](auto& c) { c.n_sites = 0; });
  bad([](auto& c) { c.error_threshold = 1.5; });
  bad([](auto& c) { c.max_iterations = 0; });
  bad([](auto& c) { c.difficulty = 65; });
  bad([](auto& c) { c.max_metadata_bytes = 0; });
  EXPECT_NO_THROW(mc::ProtocolConfig{}.validate());
}
