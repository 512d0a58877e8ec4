#pragma once

// Scenario configuration: flat `key = value` lines with dotted keys, `#`
// starts a comment. Every key is optional except where noted; unknown keys
// and malformed values are errors, never silently defaulted.
//
//   protocol.n_sites = 4              required
//   protocol.delta = 1                polling period (ticks)
//   protocol.theta = 2                bid window (ticks)
//   protocol.error_threshold = 0.25   or "none"
//   protocol.max_iterations = 20      or "none"
//   protocol.difficulty = 12
//   protocol.max_metadata_bytes = 8388608
//   protocol.seed = 0
//   protocol.max_ticks = 100000
//   learner.learning_rate = 0.1
//   learner.epochs = 5
//   learner.l2 = 0
//   learner.shuffle_seed = 0          defaults to protocol.seed
//   data.path = data.csv              relative to the config file
//   data.partition = equal            or "80,80,80,80"
//   data.holdout_fraction = 0.2
//   event.<label> = <tick> leave <site>
//   event.<label> = <tick> join <site> rows=<n>
//   event.<label> = <tick> new_data <site> rows=<n>
//   script.s<site>.t<t> = <error>          scripted learner, data version 0
//   script.s<site>.t<t>.v<version> = <error>
//
// data.path and script.* are mutually exclusive.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "modelchain/errors.hpp"
#include "modelchain/harness/dataset.hpp"
#include "modelchain/harness/io.hpp"
#include "modelchain/learning.hpp"
#include "modelchain/protocol.hpp"

namespace modelchain::harness {

enum class LifecycleKind { Join, Leave, NewData };

struct ScriptedEvent {
  std::uint64_t tick = 0;
  LifecycleKind kind = LifecycleKind::Leave;
  SiteId site = 0;
  std::size_t rows = 0;

  bool operator==(const ScriptedEvent&) const = default;
};

struct ScenarioConfig {
  ProtocolConfig protocol;
  LearnerParams learner;
  std::optional<std::filesystem::path> dataset_path;
  PartitionSpec partition;
  double holdout_fraction = 0.2;
  std::vector<ScriptedEvent> events;
  std::optional<std::map<ScriptedLearner::Key, double>> scripted_errors;

  bool scripted() const { return scripted_errors.has_value(); }
};

namespace detail {

template <typename T>
T parse_uint(std::string_view key, std::string_view v, T min = 0) {
  T out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size() || out < min)
    throw ConfigError(std::string(key) + ": expected an integer >= " + std::to_string(min) + ", got '" +
                      std::string(v) + "'");
  return out;
}

inline double parse_real(std::string_view key, std::string_view v, double lo, double hi) {
  auto d = parse_double(v);
  if (!d || *d < lo || *d > hi)
    throw ConfigError(std::string(key) + ": expected a number in [" + std::to_string(lo) + ", " +
                      std::to_string(hi) + "], got '" + std::string(v) + "'");
  return *d;
}

inline ScriptedEvent parse_event(std::string_view key, std::string_view v) {
  std::vector<std::string_view> parts;
  for (auto p : split(v, ' '))
    if (!p.empty()) parts.push_back(p);
  if (parts.size() < 3 || parts.size() > 4)
    throw ConfigError(std::string(key) + ": expected '<tick> <join|leave|new_data> <site> [rows=<n>]'");
  ScriptedEvent ev;
  ev.tick = parse_uint<std::uint64_t>(key, parts[0]);
  if (parts[1] == "join")
    ev.kind = LifecycleKind::Join;
  else if (parts[1] == "leave")
    ev.kind = LifecycleKind::Leave;
  else if (parts[1] == "new_data")
    ev.kind = LifecycleKind::NewData;
  else
    throw ConfigError(std::string(key) + ": unknown event kind '" + std::string(parts[1]) + "'");
  ev.site = parse_uint<SiteId>(key, parts[2], 1);
  if (parts.size() == 4) {
    if (!parts[3].starts_with("rows=")) throw ConfigError(std::string(key) + ": expected rows=<n>");
    if (ev.kind == LifecycleKind::Leave) throw ConfigError(std::string(key) + ": leave takes no rows");
    ev.rows = parse_uint<std::size_t>(key, parts[3].substr(5));
  }
  return ev;
}

// "s<site>.t<t>" or "s<site>.t<t>.v<version>"
inline ScriptedLearner::Key parse_script_key(std::string_view key) {
  std::string_view rest = key.substr(std::string_view("script.").size());
  auto parts = split(rest, '.');
  auto bad = [&] {
    return ConfigError(std::string(key) + ": expected script.s<site>.t<t>[.v<version>]");
  };
  if (parts.size() < 2 || parts.size() > 3) throw bad();
  if (!parts[0].starts_with("s") || !parts[1].starts_with("t")) throw bad();
  SiteId site = parse_uint<SiteId>(key, parts[0].substr(1), 1);
  std::uint64_t t = parse_uint<std::uint64_t>(key, parts[1].substr(1));
  std::uint32_t v = 0;
  if (parts.size() == 3) {
    if (!parts[2].starts_with("v")) throw bad();
    v = parse_uint<std::uint32_t>(key, parts[2].substr(1));
  }
  return {site, t, v};
}

}  // namespace detail

inline ScenarioConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {}) {
  using namespace detail;
  ScenarioConfig cfg;
  std::map<std::string, std::string, std::less<>> seen;
  bool shuffle_seed_set = false;
  bool n_sites_set = false;

  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    std::string_view line = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    pos = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    std::string key(trim(line.substr(0, eq)));
    std::string_view value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key or value");
    if (!seen.emplace(key, std::string(value)).second) throw ConfigError(key + ": duplicate key");

    auto& p = cfg.protocol;
    if (key == "protocol.delta") {
      p.delta = parse_uint<std::uint64_t>(key, value, 1);
    } else if (key == "protocol.theta") {
      p.theta = parse_uint<std::uint64_t>(key, value, 1);
    } else if (key == "protocol.n_sites") {
      p.n_sites = parse_uint<std::uint32_t>(key, value, 1);
      n_sites_set = true;
    } else if (key == "protocol.error_threshold") {
      if (value == "none")
        p.error_threshold.reset();
      else
        p.error_threshold = parse_real(key, value, 0.0, 1.0);
    } else if (key == "protocol.max_iterations") {
      if (value == "none")
        p.max_iterations.reset();
      else
        p.max_iterations = parse_uint<std::uint64_t>(key, value, 1);
    } else if (key == "protocol.difficulty") {
      p.difficulty = parse_uint<unsigned>(key, value);
      if (p.difficulty > kMaxDifficulty) throw ConfigError(key + ": must be <= " + std::to_string(kMaxDifficulty));
    } else if (key == "protocol.max_metadata_bytes") {
      p.max_metadata_bytes = parse_uint<std::size_t>(key, value, 1);
    } else if (key == "protocol.seed") {
      p.seed = parse_uint<std::uint64_t>(key, value);
    } else if (key == "protocol.max_ticks") {
      p.max_ticks = parse_uint<std::uint64_t>(key, value, 1);
    } else if (key == "learner.learning_rate") {
      cfg.learner.learning_rate = parse_real(key, value, std::numeric_limits<double>::min(), 1e6);
    } else if (key == "learner.epochs") {
      cfg.learner.epochs = parse_uint<unsigned>(key, value);
    } else if (key == "learner.l2") {
      cfg.learner.l2 = parse_real(key, value, 0.0, 1e6);
    } else if (key == "learner.shuffle_seed") {
      cfg.learner.shuffle_seed = parse_uint<std::uint64_t>(key, value);
      shuffle_seed_set = true;
    } else if (key == "data.path") {
      std::filesystem::path path{std::string(value)};
      cfg.dataset_path = path.is_absolute() ? path : base_dir / path;
    } else if (key == "data.partition") {
      if (value == "equal") {
        cfg.partition = PartitionSpec{};
      } else {
        PartitionSpec spec{false, {}};
        for (auto c : split(value, ',')) spec.counts.push_back(parse_uint<std::size_t>(key, c, 1));
        cfg.partition = std::move(spec);
      }
    } else if (key == "data.holdout_fraction") {
      cfg.holdout_fraction = parse_real(key, value, 0.0, 1.0);
      if (cfg.holdout_fraction >= 1.0) throw ConfigError(key + ": must be < 1");
    } else if (key.starts_with("event.")) {
      cfg.events.push_back(parse_event(key, value));
    } else if (key.starts_with("script.")) {
      if (!cfg.scripted_errors) cfg.scripted_errors.emplace();
      (*cfg.scripted_errors)[parse_script_key(key)] = parse_real(key, value, 0.0, 1.0);
    } else {
      throw ConfigError(key + ": unknown configuration key");
    }
  }

  if (!n_sites_set) throw ConfigError("protocol.n_sites: required");
  if (!shuffle_seed_set) cfg.learner.shuffle_seed = cfg.protocol.seed;
  if (cfg.scripted() && cfg.dataset_path)
    throw ConfigError("data.path: scripted errors (script.*) and a dataset are mutually exclusive");
  if (!cfg.scripted() && !cfg.dataset_path) throw ConfigError("data.path: required unless script.* is given");
  if (cfg.scripted()) {
    for (const auto& ev : cfg.events)
      if (ev.rows != 0) throw ConfigError("event: rows=<n> has no meaning in a scripted run");
  } else {
    for (const auto& ev : cfg.events)
      if (ev.kind == LifecycleKind::Join && ev.rows == 0)
        throw ConfigError("event: join needs rows=<n> with n >= 1 when a dataset is used");
  }
  if (!cfg.partition.equal && cfg.partition.counts.size() != cfg.protocol.n_sites)
    throw ConfigError("data.partition: " + std::to_string(cfg.partition.counts.size()) + " counts for " +
                      std::to_string(cfg.protocol.n_sites) + " sites");
  cfg.protocol.validate();
  return cfg;
}

inline ScenarioConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text, path.parent_path());
}

}  // namespace modelchain::harness
