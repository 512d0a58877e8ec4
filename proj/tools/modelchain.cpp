// modelchain: run ModelChain scenarios, verify chain dumps, audit traces.
//
//   modelchain run --config <path> [--chain-out <path>] [--trace-out <path>]
//   modelchain verify --chain <path>
//   modelchain report --trace <path> --chain <path>
//   modelchain synth --rows <n> --seed <s> --out <path>

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "modelchain/modelchain.hpp"

namespace mc = modelchain;
namespace hn = modelchain::harness;

namespace {

int run(const std::string& config, const std::string& chain_out, const std::string& trace_out) {
  try {
    hn::ScenarioConfig cfg = hn::load_config(config);
    auto result = hn::run_scenario(cfg, {chain_out, trace_out});
    for (const auto& w : result.outcome.warnings) std::cerr << "warning: " << w << '\n';
    hn::print_report(std::cout, result.report);
    std::cout << "consensus model:  height " << result.outcome.consensus_height << ", from site "
              << result.outcome.consensus_model.origin_site << '\n';
    std::cout << "chain written to  " << chain_out << '\n';
    std::cout << "trace written to  " << trace_out << '\n';
    return hn::kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return hn::exit_code_for(e);
  }
}

int synth(std::size_t rows, std::uint64_t seed, double margin, const std::string& out) {
  try {
    hn::write_file_atomic(out, hn::to_csv(hn::make_separable_dataset(rows, seed, margin)));
    std::cout << "wrote " << rows << " rows to " << out << '\n';
    return hn::kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return hn::exit_code_for(e);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ModelChain: proof-of-information online learning over a private proof-of-work ledger"};
  app.require_subcommand(1);

  std::string config, chain_out = "chain.jsonl", trace_out = "trace.jsonl";
  auto* run_cmd = app.add_subcommand("run", "Run a scenario and write its chain dump and trace");
  run_cmd->add_option("--config", config, "Scenario configuration file")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--chain-out", chain_out, "Chain dump output path")->capture_default_str();
  run_cmd->add_option("--trace-out", trace_out, "Trace output path")->capture_default_str();

  std::string chain;
  auto* verify_cmd = app.add_subcommand("verify", "Re-hash and check a chain dump; exit 1 if invalid");
  verify_cmd->add_option("--chain", chain, "Chain dump")->required();

  std::string trace;
  auto* report_cmd = app.add_subcommand("report", "Audit a trace against its chain and summarize the run");
  report_cmd->add_option("--trace", trace, "Trace file")->required();
  report_cmd->add_option("--chain", chain, "Chain dump")->required();

  std::size_t rows = 400;
  std::uint64_t seed = 0;
  double margin = 1.0;
  std::string out;
  auto* synth_cmd = app.add_subcommand("synth", "Write a seeded, linearly separable 2-feature CSV dataset");
  synth_cmd->add_option("--rows", rows, "Row count")->capture_default_str();
  synth_cmd->add_option("--seed", seed, "RNG seed")->capture_default_str();
  synth_cmd->add_option("--margin", margin, "Minimum distance from the separating line")->capture_default_str();
  synth_cmd->add_option("--out", out, "Output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : hn::kExitConfig;
  }

  if (*run_cmd) return run(config, chain_out, trace_out);
  if (*verify_cmd) return hn::verify_command(chain, std::cout, std::cerr);
  if (*report_cmd) return hn::report_command(trace, chain, std::cout, std::cerr);
  if (*synth_cmd) return synth(rows, seed, margin, out);
  return hn::kExitConfig;
}
