#pragma once

// The audit trail written next to the chain dump. One JSON object per line:
//
//   {"tick":4,"height":11,"from":2,"to":2,"flag":"UPDATE","error":0.3,"model_hash":".."}
//   {"tick":20,"event":"new_data","site":1}
//   {"tick":12,"event":"stop","reason":"CONSENSUS","height":24,"iterations":4,"holdout_error":null}
//
// Transaction records must be reproducible from the chain alone; the stop
// record is the only thing the chain cannot tell you.

#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"
#include "modelchain/ledger.hpp"
#include "modelchain/protocol.hpp"

namespace modelchain {

// Chain-derivable part of a transaction record.
struct TraceEntry {
  std::uint64_t height = 0;
  SiteId from = 0;
  SiteId to = 0;
  Flag flag = Flag::Transfer;
  double error = 0.0;
  Digest model_hash;

  bool operator==(const TraceEntry&) const = default;
};

struct TxRecord {
  std::uint64_t tick = 0;
  TraceEntry entry;

  bool operator==(const TxRecord&) const = default;
};

struct LifecycleRecord {
  std::uint64_t tick = 0;
  std::string event;  // "join" | "leave" | "new_data"
  SiteId site = 0;

  bool operator==(const LifecycleRecord&) const = default;
};

struct StopRecord {
  std::uint64_t tick = 0;
  StopReason reason = StopReason::Consensus;
  std::uint64_t height = 0;
  std::uint64_t iterations = 0;
  std::optional<double> holdout_error;

  bool operator==(const StopRecord&) const = default;
};

using TraceRecord = std::variant<TxRecord, LifecycleRecord, StopRecord>;

inline TraceEntry entry_of(const Block& b) {
  return {b.height, b.tx.from_site, b.tx.to_site, b.tx.flag, b.tx.error, b.tx.model_hash};
}

// Every transaction after genesis, in height order.
inline std::vector<TraceEntry> reconstruct_trace(const Chain& chain) {
  std::vector<TraceEntry> out;
  for (std::size_t h = 1; h < chain.size(); ++h) out.push_back(entry_of(chain[h]));
  return out;
}

inline std::vector<TraceEntry> trace_entries(const std::vector<TraceRecord>& records) {
  std::vector<TraceEntry> out;
  for (const auto& r : records)
    if (const auto* tx = std::get_if<TxRecord>(&r)) out.push_back(tx->entry);
  return out;
}

inline std::optional<StopRecord> stop_record(const std::vector<TraceRecord>& records) {
  for (auto it = records.rbegin(); it != records.rend(); ++it)
    if (const auto* s = std::get_if<StopRecord>(&*it)) return *s;
  return std::nullopt;
}

inline nlohmann::ordered_json record_to_json(const TraceRecord& record) {
  nlohmann::ordered_json j;
  std::visit(
      [&](const auto& r) {
        using T = std::decay_t<decltype(r)>;
        j["tick"] = r.tick;
        if constexpr (std::is_same_v<T, TxRecord>) {
          j["height"] = r.entry.height;
          j["from"] = r.entry.from;
          j["to"] = r.entry.to;
          j["flag"] = to_string(r.entry.flag);
          j["error"] = r.entry.error;
          j["model_hash"] = r.entry.model_hash.hex();
        } else if constexpr (std::is_same_v<T, LifecycleRecord>) {
          j["event"] = r.event;
          j["site"] = r.site;
        } else {
          j["event"] = "stop";
          j["reason"] = to_string(r.reason);
          j["height"] = r.height;
          j["iterations"] = r.iterations;
          j["holdout_error"] = r.holdout_error ? nlohmann::ordered_json(*r.holdout_error) : nullptr;
        }
      },
      record);
  return j;
}

inline std::string dump_trace(const std::vector<TraceRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<TraceRecord> parse_trace(std::string_view text) {
  std::vector<TraceRecord> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& why) -> FormatError {
    return FormatError("trace line " + std::to_string(lineno) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw fail(e.what());
    }
    try {
      std::uint64_t tick = j.at("tick").get<std::uint64_t>();
      if (!j.contains("event")) {
        TxRecord r;
        r.tick = tick;
        r.entry.height = j.at("height").get<std::uint64_t>();
        r.entry.from = j.at("from").get<SiteId>();
        r.entry.to = j.at("to").get<SiteId>();
        auto flag = parse_flag(j.at("flag").get<std::string>());
        if (!flag) throw fail("unknown flag");
        r.entry.flag = *flag;
        r.entry.error = j.at("error").get<double>();
        auto hash = Digest::from_hex(j.at("model_hash").get<std::string>());
        if (!hash) throw fail("bad model_hash");
        r.entry.model_hash = *hash;
        out.emplace_back(r);
        continue;
      }
      std::string event = j.at("event").get<std::string>();
      if (event == "stop") {
        StopRecord r;
        r.tick = tick;
        auto reason = parse_stop_reason(j.at("reason").get<std::string>());
        if (!reason) throw fail("unknown stop reason");
        r.reason = *reason;
        r.height = j.at("height").get<std::uint64_t>();
        r.iterations = j.at("iterations").get<std::uint64_t>();
        if (!j.at("holdout_error").is_null()) r.holdout_error = j.at("holdout_error").get<double>();
        out.emplace_back(r);
      } else if (event == "join" || event == "leave" || event == "new_data") {
        out.emplace_back(LifecycleRecord{tick, event, j.at("site").get<SiteId>()});
      } else {
        throw fail("unknown event '" + event + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw fail(e.what());
    }
  }
  return out;
}

}  // namespace modelchain
