// swbnet command-line front end: simulate, analyze, replicate, mediate.
//
// Exit codes: 0 success, 1 config/input error, 2 replication verdict
// failure, 3 I/O error.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "swbnet/swbnet.hpp"

namespace {

using namespace swbnet;
namespace hs = swbnet::harness;

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitVerdict = 2;
constexpr int kExitIo = 3;

void print_summary(const hs::AnalysisResult& a) {
  std::printf("%-24s %14s %14s %12s\n", "outcome", "visible", "invisible", "p");
  for (const auto& c : a.summary)
    std::printf("%-24s %14s %14s %12s\n", c.outcome.c_str(), hs::detail::fmt10(c.visible_mean).c_str(),
                hs::detail::fmt10(c.invisible_mean).c_str(), hs::detail::fmt10(c.p_value).c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic-network public goods game simulator with SWB visibility"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<int> replicates;
  std::optional<std::string> condition;
  int jobs = 1;

  auto* sim = app.add_subcommand("simulate", "run sessions for both conditions and write event logs");
  sim->add_option("--config", config_path, "flat key = value run config file");
  sim->add_option("--seed", seed, "master seed");
  sim->add_option("--out", out_dir, "output run directory");
  sim->add_option("--replicates", replicates, "networks per condition");
  sim->add_option("--condition", condition, "visible|invisible|both")->check(CLI::IsMember({"visible", "invisible", "both"}));
  sim->add_option("--jobs", jobs, "parallel sessions")->check(CLI::PositiveNumber);

  std::string run_dir;
  auto* ana = app.add_subcommand("analyze", "compute per-round metrics and the condition summary");
  ana->add_option("run", run_dir, "run directory")->required();
  ana->add_option("--jobs", jobs, "parallel networks")->check(CLI::PositiveNumber);

  auto* rep = app.add_subcommand("replicate", "evaluate the directional findings on an analyzed run");
  rep->add_option("run", run_dir, "run directory")->required();

  std::string mediator = "coop_centrality";
  std::string outcome = "community_count";
  auto* med = app.add_subcommand("mediate", "condition -> mediator -> outcome mediation over network means");
  med->add_option("run", run_dir, "run directory")->required();
  med->add_option("--mediator", mediator, "mediator column (networks.csv)");
  med->add_option("--outcome", outcome, "outcome column (networks.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*sim) {
      hs::RunConfig rc = config_path.empty() ? hs::RunConfig{} : hs::load_run_config(config_path);
      if (seed) rc.session.seed = *seed;
      if (out_dir) rc.output_directory = *out_dir;
      if (replicates) rc.replicates_per_condition = *replicates;
      if (condition) rc.conditions = hs::detail::parse_condition_set(*condition);
      const auto dir = hs::simulate(rc, jobs);
      std::cout << "wrote " << rc.condition_list().size() * static_cast<std::size_t>(rc.replicates_per_condition)
                << " session logs to " << dir.string() << '\n';
    } else if (*ana) {
      const auto a = hs::analyze(run_dir, jobs);
      print_summary(a);
    } else if (*rep) {
      const auto report = hs::replicate(run_dir);
      for (const auto& v : report.verdicts)
        std::printf("[%s] %-55s effect=%-14s p=%-12s %s\n", v.passed ? "PASS" : "FAIL", v.finding.c_str(),
                    hs::detail::fmt10(v.effect).c_str(), hs::detail::fmt10(v.p_value).c_str(), v.detail.c_str());
      return report.all_passed() ? kExitOk : kExitVerdict;
    } else if (*med) {
      const auto r = hs::mediate_cmd(run_dir, mediator, outcome);
      std::printf("mediator=%s outcome=%s\n", mediator.c_str(), outcome.c_str());
      std::printf("total=%s direct=%s indirect=%s\n", hs::detail::fmt10(r.total).c_str(),
                  hs::detail::fmt10(r.direct).c_str(), hs::detail::fmt10(r.indirect).c_str());
      std::printf("proportion_mediated=%s%s\n", hs::detail::fmt10(r.proportion).c_str(),
                  r.proportion_unstable ? " (unstable: total effect near zero)" : "");
      std::printf("indirect 95%% CI=[%s, %s] p=%s (bootstrap=%d)\n", hs::detail::fmt10(r.ci_low).c_str(),
                  hs::detail::fmt10(r.ci_high).c_str(), hs::detail::fmt10(r.p_value).c_str(), r.bootstrap);
    }
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitOk;
}
