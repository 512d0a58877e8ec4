#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "modelchain/errors.hpp"
#include "modelchain/harness/io.hpp"
#include "modelchain/learning.hpp"

namespace modelchain::harness {

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail

// CSV with a header row: numeric feature columns, then a final "label"
// column holding 0 or 1.
inline Partition parse_dataset(std::string_view text) {
  Partition pool;
  std::size_t lineno = 0;
  std::size_t columns = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    std::string_view line = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    pos = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++lineno;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split(line, ',');
    if (columns == 0) {
      if (cells.size() < 2 || cells.back() != "label")
        throw ConfigError("dataset line " + std::to_string(lineno) +
                          ": header must list feature columns followed by 'label'");
      columns = cells.size();
      continue;
    }
    if (cells.size() != columns)
      throw ConfigError("dataset line " + std::to_string(lineno) + ": expected " + std::to_string(columns) +
                        " cells, found " + std::to_string(cells.size()));
    Row row;
    row.x.reserve(columns - 1);
    for (std::size_t c = 0; c + 1 < columns; ++c) {
      auto v = detail::parse_double(cells[c]);
      if (!v)
        throw ConfigError("dataset line " + std::to_string(lineno) + ": non-numeric cell '" +
                          std::string(cells[c]) + "'");
      row.x.push_back(*v);
    }
    auto label = detail::parse_double(cells.back());
    if (!label || (*label != 0.0 && *label != 1.0))
      throw ConfigError("dataset line " + std::to_string(lineno) + ": label must be 0 or 1, found '" +
                        std::string(cells.back()) + "'");
    row.label = static_cast<int>(*label);
    pool.rows.push_back(std::move(row));
  }
  if (columns == 0) throw ConfigError("dataset is empty");
  if (pool.empty()) throw ConfigError("dataset has a header but no rows");
  return pool;
}

inline Partition load_dataset(const std::filesystem::path& path) {
  try {
    return parse_dataset(read_file(path));
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

inline std::string to_csv(const Partition& p) {
  std::string out;
  for (std::size_t j = 0; j < p.feature_count(); ++j) out += "x" + std::to_string(j + 1) + ",";
  out += "label\n";
  char buf[64];
  for (const Row& r : p.rows) {
    for (double v : r.x) {
      auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
      out.append(buf, end);
      out += ',';
    }
    out += std::to_string(r.label);
    out += '\n';
  }
  return out;
}

// Points uniform in [-5,5]^2, kept only if at least `margin` away from a
// seeded random line through the origin region; labeled by side.
inline Partition make_separable_dataset(std::size_t rows, std::uint64_t seed, double margin = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(-5.0, 5.0);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * 3.14159265358979323846);
  std::uniform_real_distribution<double> offset(-1.0, 1.0);
  double a = angle(rng);
  double nx = std::cos(a), ny = std::sin(a), b = offset(rng);
  Partition p;
  while (p.size() < rows) {
    double x = coord(rng), y = coord(rng);
    double d = nx * x + ny * y + b;  // signed distance, (nx, ny) is unit
    if (std::abs(d) < margin) continue;
    p.rows.push_back(Row{{x, y}, d > 0 ? 1 : 0});
  }
  return p;
}

// Per-site row counts, or an equal split of whatever is left.
struct PartitionSpec {
  bool equal = true;
  std::vector<std::size_t> counts;
};

struct Partitioned {
  std::map<SiteId, Partition> sites;  // sites 1..N
  Partition holdout;
  Partition reserve;  // rows left for scripted joins and new-data injections
};

// Seeded shuffle, holdout taken first, `reserved` rows set aside at the
// end, then contiguous blocks per site.
inline Partitioned partition_horizontal(const Partition& pool, const PartitionSpec& spec, std::uint32_t n_sites,
                                        double holdout_fraction, std::uint64_t seed, std::size_t reserved = 0) {
  if (n_sites == 0) throw ConfigError("partition: need at least one site");
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0))
    throw ConfigError("partition: holdout_fraction must lie in [0,1)");
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

  std::size_t holdout = static_cast<std::size_t>(std::llround(holdout_fraction * static_cast<double>(pool.size())));
  if (holdout + reserved > pool.size())
    throw ConfigError("partition: holdout plus reserved rows exceed the " + std::to_string(pool.size()) +
                      " dataset rows");
  std::size_t available = pool.size() - holdout - reserved;

  std::vector<std::size_t> counts;
  if (spec.equal) {
    counts.assign(n_sites, available / n_sites);
  } else {
    if (spec.counts.size() != n_sites)
      throw ConfigError("partition: " + std::to_string(spec.counts.size()) + " row counts given for " +
                        std::to_string(n_sites) + " sites");
    counts = spec.counts;
  }
  std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  if (total > available)
    throw ConfigError("partition: infeasible, sites need " + std::to_string(total) + " rows but only " +
                      std::to_string(available) + " are available");
  for (std::size_t c : counts)
    if (c == 0) throw ConfigError("partition: every site needs at least one row");

  Partitioned out;
  std::size_t at = 0;
  auto take = [&](std::size_t n, Partition& dst) {
    for (std::size_t i = 0; i < n; ++i) dst.rows.push_back(pool.rows[order[at++]]);
  };
  take(holdout, out.holdout);
  for (std::uint32_t s = 0; s < n_sites; ++s) take(counts[s], out.sites[s + 1]);
  take(reserved, out.reserve);
  return out;
}

}  // namespace modelchain::harness
