#pragma once

// Line-delimited JSON chain dump, one block per line:
//
//   {"height":1,"prev_hash":"00..","nonce":812,"block_hash":"000..","difficulty":12,
//    "tx":{"from":1,"to":1,"flag":"UPDATE","error":0.2,"model_hash":"..","model_b64":"TUNN.."}}
//
// `model_b64` is null for every flag but UPDATE. Doubles are written with
// shortest round-trip precision, so a dump reloads bit-exactly.

#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "modelchain/ledger.hpp"

namespace modelchain {

struct ChainDump {
  std::vector<Block> blocks;
  std::vector<unsigned> difficulties;  // per record, as persisted

  // Chain difficulty is taken from the genesis record.
  Chain to_chain() const {
    return Chain::from_blocks(blocks, difficulties.empty() ? 0 : difficulties.front());
  }
};

inline nlohmann::ordered_json block_to_json(const Block& b, unsigned difficulty) {
  nlohmann::ordered_json tx;
  tx["from"] = b.tx.from_site;
  tx["to"] = b.tx.to_site;
  tx["flag"] = to_string(b.tx.flag);
  tx["error"] = b.tx.error;
  tx["model_hash"] = b.tx.model_hash.hex();
  tx["model_b64"] = b.tx.model_bytes ? nlohmann::ordered_json(to_base64(*b.tx.model_bytes)) : nullptr;

  nlohmann::ordered_json j;
  j["height"] = b.height;
  j["prev_hash"] = b.prev_hash.hex();
  j["nonce"] = b.nonce;
  j["block_hash"] = b.block_hash.hex();
  j["difficulty"] = difficulty;
  j["tx"] = std::move(tx);
  return j;
}

inline std::string dump_chain(const Chain& chain) {
  std::string out;
  for (const Block& b : chain.blocks()) {
    out += block_to_json(b, chain.difficulty()).dump();
    out += '\n';
  }
  return out;
}

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end())
    throw FormatError("line " + std::to_string(line) + ": missing field '" + key + "'");
  return *it;
}

inline std::uint64_t require_uint(const nlohmann::json& obj, const char* key, std::size_t line,
                                  std::uint64_t max = std::numeric_limits<std::uint64_t>::max()) {
  const auto& v = require(obj, key, line);
  if (!v.is_number_unsigned() || v.get<std::uint64_t>() > max)
    throw FormatError("line " + std::to_string(line) + ": field '" + key + "' is not an unsigned integer in range");
  return v.get<std::uint64_t>();
}

inline Digest require_digest(const nlohmann::json& obj, const char* key, std::size_t line) {
  const auto& v = require(obj, key, line);
  std::optional<Digest> d;
  if (v.is_string()) d = Digest::from_hex(v.get<std::string>());
  if (!d) throw FormatError("line " + std::to_string(line) + ": field '" + key + "' is not a 32-byte hex digest");
  return *d;
}

}  // namespace detail

// Structural parse only; semantic checks belong to verify_dump.
inline ChainDump parse_chain_dump(std::string_view text) {
  ChainDump dump;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError("line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!j.is_object()) throw FormatError("line " + std::to_string(lineno) + ": record is not an object");
    using namespace detail;
    Block b;
    b.height = require_uint(j, "height", lineno);
    b.prev_hash = require_digest(j, "prev_hash", lineno);
    b.nonce = require_uint(j, "nonce", lineno);
    b.block_hash = require_digest(j, "block_hash", lineno);
    auto difficulty = static_cast<unsigned>(require_uint(j, "difficulty", lineno, 256));

    const auto& tx = require(j, "tx", lineno);
    if (!tx.is_object()) throw FormatError("line " + std::to_string(lineno) + ": 'tx' is not an object");
    b.tx.from_site = static_cast<SiteId>(require_uint(tx, "from", lineno, 0xffffffffu));
    b.tx.to_site = static_cast<SiteId>(require_uint(tx, "to", lineno, 0xffffffffu));
    const auto& flag = require(tx, "flag", lineno);
    auto parsed_flag = flag.is_string() ? parse_flag(flag.get<std::string>()) : std::nullopt;
    if (!parsed_flag) throw FormatError("line " + std::to_string(lineno) + ": unknown flag");
    b.tx.flag = *parsed_flag;
    const auto& err = require(tx, "error", lineno);
    if (err.is_null()) {
      b.tx.error = std::numeric_limits<double>::quiet_NaN();  // non-finite values are written as null
    } else if (err.is_number()) {
      b.tx.error = err.get<double>();
    } else {
      throw FormatError("line " + std::to_string(lineno) + ": 'error' is not a number");
    }
    b.tx.model_hash = require_digest(tx, "model_hash", lineno);
    const auto& model = require(tx, "model_b64", lineno);
    if (!model.is_null()) {
      auto raw = model.is_string() ? from_base64(model.get<std::string>()) : std::nullopt;
      if (!raw) throw FormatError("line " + std::to_string(lineno) + ": 'model_b64' is not valid base64");
      b.tx.model_bytes = std::move(*raw);
    }
    dump.blocks.push_back(std::move(b));
    dump.difficulties.push_back(difficulty);
  }
  if (dump.blocks.empty()) throw FormatError("chain dump is empty");
  return dump;
}

// verify_chain plus agreement of every record's persisted difficulty.
inline VerifyReport verify_dump(const ChainDump& dump) {
  VerifyReport report = verify_chain(dump.to_chain());
  for (std::size_t i = 1; i < dump.difficulties.size(); ++i) {
    if (dump.difficulties[i] != dump.difficulties.front())
      report.violations.push_back({i, "difficulty " + std::to_string(dump.difficulties[i]) +
                                          " disagrees with genesis difficulty " +
                                          std::to_string(dump.difficulties.front())});
  }
  std::stable_sort(report.violations.begin(), report.violations.end(),
                   [](const Violation& a, const Violation& b) { return a.height < b.height; });
  return report;
}

}  // namespace modelchain
