#pragma once

#include <exception>
#include <filesystem>
#include <ostream>

#include "modelchain/chain_dump.hpp"
#include "modelchain/harness/io.hpp"
#include "modelchain/harness/scenario.hpp"
#include "modelchain/trace.hpp"

namespace modelchain::harness {

enum ExitCode : int {
  kExitOk = 0,
  kExitInvalid = 1,    // invalid chain or audit mismatch
  kExitConfig = 2,     // configuration, parse or I/O error
  kExitProtocol = 3,   // protocol-integrity error
};

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const FormatError*>(&e) ||
      dynamic_cast<const IoError*>(&e) || dynamic_cast<const SimulationError*>(&e) ||
      dynamic_cast<const MetadataBudgetError*>(&e) || dynamic_cast<const ModelError*>(&e))
    return kExitConfig;
  return kExitProtocol;
}

inline ChainDump load_chain_dump(const std::filesystem::path& path) { return parse_chain_dump(read_file(path)); }

inline int verify_command(const std::filesystem::path& chain_path, std::ostream& out, std::ostream& err) {
  ChainDump dump;
  try {
    dump = load_chain_dump(chain_path);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  VerifyReport report = verify_dump(dump);
  if (report.valid()) {
    out << "valid: " << dump.blocks.size() << " blocks at difficulty " << dump.difficulties.front() << '\n';
    return kExitOk;
  }
  out << "INVALID: " << report.violations.size() << " violation(s)\n";
  for (const auto& v : report.violations) out << "  height " << v.height << ": " << v.what << '\n';
  return kExitInvalid;
}

// Rebuilds the transaction trace from the chain, checks it against the
// recorded trace line by line, then prints the run report.
inline int report_command(const std::filesystem::path& trace_path, const std::filesystem::path& chain_path,
                          std::ostream& out, std::ostream& err) {
  ChainDump dump;
  std::vector<TraceRecord> trace;
  try {
    dump = load_chain_dump(chain_path);
    trace = parse_trace(read_file(trace_path));
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  VerifyReport verdict = verify_dump(dump);
  if (!verdict.valid()) {
    err << "audit failed: chain does not verify (" << verdict.violations.size() << " violation(s), first at height "
        << verdict.violations.front().height << ": " << verdict.violations.front().what << ")\n";
    return kExitInvalid;
  }
  Chain chain = dump.to_chain();
  auto from_chain = reconstruct_trace(chain);
  auto recorded = trace_entries(trace);
  if (from_chain.size() != recorded.size()) {
    err << "audit failed: chain holds " << from_chain.size() << " transactions, trace records " << recorded.size()
        << '\n';
    return kExitInvalid;
  }
  for (std::size_t i = 0; i < from_chain.size(); ++i) {
    if (from_chain[i] != recorded[i]) {
      err << "audit failed: trace entry " << i << " disagrees with the block at height " << from_chain[i].height
          << '\n';
      return kExitInvalid;
    }
  }
  auto stop = stop_record(trace);
  if (!stop) {
    err << "audit failed: trace has no stop record\n";
    return kExitInvalid;
  }
  if (stop->height >= chain.size() || chain[stop->height].tx.flag != Flag::Update) {
    err << "audit failed: stop record names height " << stop->height << ", which is not an UPDATE\n";
    return kExitInvalid;
  }
  out << "audit: " << from_chain.size() << " transactions match the chain\n";
  print_report(out, build_report(chain, *stop));
  return kExitOk;
}

}  // namespace modelchain::harness
