#pragma once

// Hash-chained, proof-of-work ledger holding exactly one transaction per
// block. Block height doubles as the transaction's timestamp.
//
// Block creation is serialized by the simulator, so forks never arise. A
// multi-writer deployment would resolve them by longest chain; that path is
// not implemented.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "modelchain/bytes.hpp"
#include "modelchain/digest.hpp"
#include "modelchain/errors.hpp"

namespace modelchain {

using SiteId = std::uint32_t;

enum class Flag : std::uint8_t {
  Initialize = 0,
  Update = 1,
  Evaluate = 2,
  Transfer = 3,
};

inline std::string_view to_string(Flag f) {
  switch (f) {
    case Flag::Initialize: return "INITIALIZE";
    case Flag::Update: return "UPDATE";
    case Flag::Evaluate: return "EVALUATE";
    case Flag::Transfer: return "TRANSFER";
  }
  return "?";
}

inline std::optional<Flag> parse_flag(std::string_view s) {
  if (s == "INITIALIZE") return Flag::Initialize;
  if (s == "UPDATE") return Flag::Update;
  if (s == "EVALUATE") return Flag::Evaluate;
  if (s == "TRANSFER") return Flag::Transfer;
  return std::nullopt;
}

struct Transaction {
  SiteId from_site = 0;
  SiteId to_site = 0;
  Flag flag = Flag::Transfer;
  std::optional<Bytes> model_bytes;  // present iff flag == Update
  Digest model_hash;
  double error = 0.0;
  std::int64_t amount = 0;  // always zero on a private network
  std::int64_t fee = 0;     // always zero

  bool operator==(const Transaction&) const = default;
};

// Returns a description of the first broken transaction invariant, if any.
inline std::optional<std::string> transaction_violation(const Transaction& tx) {
  if (tx.amount != 0) return "amount must be zero";
  if (tx.fee != 0) return "fee must be zero";
  if (static_cast<std::uint8_t>(tx.flag) > 3) return "unknown flag";
  bool is_update = tx.flag == Flag::Update;
  if (is_update && !tx.model_bytes) return "UPDATE transaction without model payload";
  if (!is_update && tx.model_bytes) return std::string(to_string(tx.flag)) + " transaction carries a model payload";
  if (tx.model_bytes && hash_bytes(*tx.model_bytes) != tx.model_hash)
    return "model_hash does not match model payload";
  if (!(tx.error >= 0.0 && tx.error <= 1.0)) return "error outside [0,1]";
  return std::nullopt;
}

// UPDATE form: the hash is computed from the payload. Other flags pass
// std::nullopt and get an all-zero model_hash (the genesis sentinel); use the
// Digest overload to reference an existing model instead.
inline Transaction make_transaction(SiteId from, SiteId to, Flag flag, std::optional<Bytes> model_bytes,
                                    double error) {
  Transaction tx;
  tx.from_site = from;
  tx.to_site = to;
  tx.flag = flag;
  if (model_bytes) tx.model_hash = hash_bytes(*model_bytes);
  tx.model_bytes = std::move(model_bytes);
  tx.error = error;
  if (auto why = transaction_violation(tx)) throw LedgerError("invalid transaction: " + *why);
  return tx;
}

inline Transaction make_transaction(SiteId from, SiteId to, Flag flag, const Digest& model_hash, double error) {
  if (flag == Flag::Update) throw LedgerError("invalid transaction: UPDATE requires the model payload");
  Transaction tx;
  tx.from_site = from;
  tx.to_site = to;
  tx.flag = flag;
  tx.model_hash = model_hash;
  tx.error = error;
  if (auto why = transaction_violation(tx)) throw LedgerError("invalid transaction: " + *why);
  return tx;
}

// from u32 | to u32 | flag u8 | error f64 | model_hash[32] | model_len u32 | model
inline Bytes transaction_bytes(const Transaction& tx) {
  Bytes out;
  std::size_t model_len = tx.model_bytes ? tx.model_bytes->size() : 0;
  out.reserve(4 + 4 + 1 + 8 + 32 + 4 + model_len);
  put_u32(out, tx.from_site);
  put_u32(out, tx.to_site);
  put_u8(out, static_cast<std::uint8_t>(tx.flag));
  put_f64(out, tx.error);
  put_bytes(out, tx.model_hash.bytes);
  put_u32(out, static_cast<std::uint32_t>(model_len));
  if (tx.model_bytes) put_bytes(out, *tx.model_bytes);
  return out;
}

inline constexpr std::size_t kNonceOffset = 8 + 32;

// height u64 | prev_hash[32] | nonce u64 | transaction_bytes
inline Bytes header_bytes(std::uint64_t height, const Digest& prev_hash, std::uint64_t nonce,
                          const Transaction& tx) {
  Bytes out;
  put_u64(out, height);
  put_bytes(out, prev_hash.bytes);
  put_u64(out, nonce);
  put_bytes(out, transaction_bytes(tx));
  return out;
}

struct Block {
  std::uint64_t height = 0;
  Digest prev_hash;
  std::uint64_t nonce = 0;
  Transaction tx;
  Digest block_hash;

  Digest compute_hash() const { return hash_bytes(header_bytes(height, prev_hash, nonce, tx)); }

  bool operator==(const Block&) const = default;
};

inline constexpr unsigned kMaxDifficulty = 64;
inline constexpr unsigned kDefaultDifficulty = 12;

// Scans nonces in [first, last] upward and returns the first whose header
// hash has at least `difficulty` leading zero bits.
inline std::optional<std::pair<std::uint64_t, Digest>> search_nonce(Bytes header, unsigned difficulty,
                                                                    std::uint64_t first, std::uint64_t last) {
  for (std::uint64_t nonce = first;; ++nonce) {
    for (int i = 0; i < 8; ++i) header[kNonceOffset + i] = static_cast<std::uint8_t>(nonce >> (8 * i));
    Digest h = hash_bytes(header);
    if (h.leading_zero_bits() >= difficulty) return std::make_pair(nonce, h);
    if (nonce == last) return std::nullopt;
  }
}

// Smallest qualifying nonce, searched from zero. Pure function of its inputs.
inline Block mine_block(const Digest& prev_hash, std::uint64_t height, Transaction tx, unsigned difficulty) {
  if (difficulty > kMaxDifficulty)
    throw MiningError("difficulty " + std::to_string(difficulty) + " exceeds cap of " +
                      std::to_string(kMaxDifficulty));
  if (auto why = transaction_violation(tx)) throw LedgerError("invalid transaction: " + *why);
  auto found = search_nonce(header_bytes(height, prev_hash, 0, tx), difficulty, 0,
                            std::numeric_limits<std::uint64_t>::max());
  if (!found) throw MiningError("nonce space exhausted at height " + std::to_string(height));
  return Block{height, prev_hash, found->first, std::move(tx), found->second};
}

// TRANSFER 0 -> 0, error 0, zero model hash, mined at the chain difficulty.
inline Transaction genesis_transaction() {
  return make_transaction(0, 0, Flag::Transfer, Digest::zero(), 0.0);
}

inline Block make_genesis(unsigned difficulty) {
  return mine_block(Digest::zero(), 0, genesis_transaction(), difficulty);
}

class AppendRejected : public LedgerError {
 public:
  enum class Reason { LinkMismatch, HeightMismatch, HashMismatch, DifficultyUnmet, InvalidTransaction };

  AppendRejected(Reason reason, const std::string& what) : LedgerError(what), reason_(reason) {}
  Reason reason() const noexcept { return reason_; }

 private:
  Reason reason_;
};

class Chain {
 public:
  explicit Chain(unsigned difficulty = kDefaultDifficulty) : difficulty_(difficulty) {
    blocks_.push_back(make_genesis(difficulty));
  }

  // Wraps blocks without checking them; used when loading a dump that
  // verify_chain will judge afterwards.
  static Chain from_blocks(std::vector<Block> blocks, unsigned difficulty) {
    Chain c(Unchecked{}, difficulty);
    c.blocks_ = std::move(blocks);
    return c;
  }

  const std::vector<Block>& blocks() const noexcept { return blocks_; }
  std::vector<Block>& mutable_blocks() noexcept { return blocks_; }
  unsigned difficulty() const noexcept { return difficulty_; }
  std::size_t size() const noexcept { return blocks_.size(); }
  const Block& tip() const { return blocks_.back(); }
  const Block& operator[](std::size_t height) const { return blocks_.at(height); }

  void append(Block block) {
    using R = AppendRejected::Reason;
    if (block.height != blocks_.size())
      throw AppendRejected(R::HeightMismatch, "block height " + std::to_string(block.height) +
                                                  " does not extend chain of length " +
                                                  std::to_string(blocks_.size()));
    Digest expected_prev = blocks_.empty() ? Digest::zero() : blocks_.back().block_hash;
    if (block.prev_hash != expected_prev)
      throw AppendRejected(R::LinkMismatch, "prev_hash does not match tip hash " + expected_prev.hex());
    if (auto why = transaction_violation(block.tx)) throw AppendRejected(R::InvalidTransaction, *why);
    if (block.compute_hash() != block.block_hash)
      throw AppendRejected(R::HashMismatch, "block_hash does not match header contents");
    if (block.block_hash.leading_zero_bits() < difficulty_)
      throw AppendRejected(R::DifficultyUnmet, "block hash has fewer than " + std::to_string(difficulty_) +
                                                   " leading zero bits");
    blocks_.push_back(std::move(block));
  }

  // Mines `tx` on top of the tip and appends it.
  const Block& commit(Transaction tx) {
    append(mine_block(tip().block_hash, blocks_.size(), std::move(tx), difficulty_));
    return blocks_.back();
  }

  bool operator==(const Chain&) const = default;

 private:
  struct Unchecked {};
  Chain(Unchecked, unsigned difficulty) : difficulty_(difficulty) {}

  unsigned difficulty_;
  std::vector<Block> blocks_;
};

inline Chain append_block(Chain chain, Block block) {
  chain.append(std::move(block));
  return chain;
}

struct Violation {
  std::uint64_t height;
  std::string what;
};

struct VerifyReport {
  std::vector<Violation> violations;
  bool valid() const { return violations.empty(); }
};

inline VerifyReport verify_chain(const Chain& chain) {
  VerifyReport report;
  auto flag_issue = [&](std::uint64_t h, std::string what) { report.violations.push_back({h, std::move(what)}); };
  const auto& blocks = chain.blocks();
  if (blocks.empty()) {
    flag_issue(0, "chain has no genesis block");
    return report;
  }
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const Block& b = blocks[i];
    if (b.height != i) flag_issue(i, "height " + std::to_string(b.height) + " at position " + std::to_string(i));
    Digest expected_prev = i == 0 ? Digest::zero() : blocks[i - 1].block_hash;
    if (b.prev_hash != expected_prev) flag_issue(i, "prev_hash does not link to previous block");
    if (b.compute_hash() != b.block_hash) flag_issue(i, "block_hash does not match header contents");
    if (b.block_hash.leading_zero_bits() < chain.difficulty())
      flag_issue(i, "block hash misses difficulty " + std::to_string(chain.difficulty()));
    if (auto why = transaction_violation(b.tx)) flag_issue(i, *why);
    if (i == 0 && b.tx != genesis_transaction()) flag_issue(0, "malformed genesis transaction");
  }
  return report;
}

struct UpdateRecord {
  Bytes model_bytes;
  Digest model_hash;
  double error = 0.0;
  SiteId from_site = 0;
  std::uint64_t height = 0;
};

inline std::optional<UpdateRecord> update_at(const Chain& chain, std::uint64_t height) {
  const Transaction& tx = chain[height].tx;
  if (tx.flag != Flag::Update || !tx.model_bytes) return std::nullopt;
  return UpdateRecord{*tx.model_bytes, tx.model_hash, tx.error, tx.from_site, height};
}

// Most recent UPDATE, scanning back from the tip.
inline std::optional<UpdateRecord> latest_update(const Chain& chain) {
  for (std::size_t h = chain.size(); h-- > 0;)
    if (chain[h].tx.flag == Flag::Update) return update_at(chain, h);
  return std::nullopt;
}

// Most recent UPDATE whose model hash equals `hash`.
inline std::optional<UpdateRecord> find_update(const Chain& chain, const Digest& hash) {
  for (std::size_t h = chain.size(); h-- > 0;) {
    const Transaction& tx = chain[h].tx;
    if (tx.flag == Flag::Update && tx.model_hash == hash) return update_at(chain, h);
  }
  return std::nullopt;
}

// Number of UPDATE transactions at heights <= `up_to`.
inline std::uint64_t count_updates(const Chain& chain, std::uint64_t up_to) {
  std::uint64_t n = 0;
  for (std::size_t h = 0; h < chain.size() && h <= up_to; ++h)
    if (chain[h].tx.flag == Flag::Update) ++n;
  return n;
}

inline std::uint64_t count_updates(const Chain& chain) { return count_updates(chain, chain.size()); }

struct Evaluation {
  SiteId site;
  double error;

  bool operator==(const Evaluation&) const = default;
};

// EVALUATE bids for `target` strictly above `since_height`; one per site
// (the latest wins), ordered by site id.
inline std::vector<Evaluation> collect_evaluations(const Chain& chain, const Digest& target,
                                                   std::uint64_t since_height) {
  std::map<SiteId, double> latest;
  for (std::size_t h = since_height + 1; h < chain.size(); ++h) {
    const Transaction& tx = chain[h].tx;
    if (tx.flag == Flag::Evaluate && tx.model_hash == target) latest[tx.from_site] = tx.error;
  }
  std::vector<Evaluation> out;
  out.reserve(latest.size());
  for (auto [site, err] : latest) out.push_back({site, err});
  return out;
}

}  // namespace modelchain
