// Command-line driver: solve a hierarchy sweep, export SDPs, or run oracles.

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <string>

#include "occmom/driver.hpp"

namespace {

void parse_orders(const std::string& text, occmom::RunConfig& cfg) {
  const auto dots = text.find("..");
  try {
    if (dots == std::string::npos) {
      cfg.r_min = cfg.r_max = static_cast<unsigned>(std::stoul(text));
    } else {
      cfg.r_min = static_cast<unsigned>(std::stoul(text.substr(0, dots)));
      cfg.r_max = static_cast<unsigned>(std::stoul(text.substr(dots + 2)));
    }
  } catch (const std::exception&) {
    throw CLI::ValidationError("--orders", "expected a..b or a single order, got '" + text + "'");
  }
}

void add_common(CLI::App* cmd, occmom::RunConfig& cfg, std::string& orders, std::string& mode) {
  auto* b = cmd->add_option("--builtin", cfg.builtin, "builtin problem")->check(CLI::IsMember({"turnpike", "lqr", "frozen"}));
  auto* p = cmd->add_option("--problem", cfg.problem_path, "problem file")->check(CLI::ExistingFile);
  b->excludes(p);
  cmd->add_option("--mode", mode, "initial measure for builtins")->check(CLI::IsMember({"dirac", "averaged"}));
  cmd->add_option("--orders", orders, "relaxation orders, a..b");
  cmd->add_option("--tol", cfg.tol, "solver tolerance")->check(CLI::Range(1e-10, 1e-4));
  cmd->add_option("--grid", cfg.grid, "oracle grid nodes per axis")->check(CLI::PositiveNumber);
  cmd->add_option("--out", cfg.out, "output directory");
  cmd->add_option("--seed", cfg.seed, "sampling seed (recorded in the manifest)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Occupation-measure moment relaxations of polynomial optimal control problems"};
  app.require_subcommand(1);
  app.set_version_flag("--version", occmom::kToolVersion);

  occmom::RunConfig cfg;
  std::string orders = "2..4";
  std::string mode = "dirac";
  auto* solve = app.add_subcommand("solve", "sweep relaxation orders and write bounds and gap reports");
  auto* exp = app.add_subcommand("export", "write the SDP of each order in SDPA sparse format");
  auto* orc = app.add_subcommand("oracle", "write oracle value grid and optimal flow for a builtin");
  for (auto* c : {solve, exp, orc}) add_common(c, cfg, orders, mode);

  try {
    app.parse(argc, argv);
    parse_orders(orders, cfg);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  cfg.mode = mode == "averaged" ? occmom::InitialMode::Averaged : occmom::InitialMode::Dirac;

  try {
    occmom::RunManifest man;
    if (solve->parsed())
      man = occmom::cmd_solve(cfg);
    else if (exp->parsed())
      man = occmom::cmd_export(cfg);
    else
      man = occmom::cmd_oracle(cfg);

    for (const auto& r : man.orders) {
      if (!r.error.empty())
        std::printf("order %u: error: %s\n", r.order, r.error.c_str());
      else if (solve->parsed())
        std::printf("order %u: %-14s primal %.10g  dual %.10g  (%zu vars, %d it, %.2fs)\n", r.order, occmom::to_string(r.status), r.primal, r.dual,
                    r.variables, r.iterations, r.seconds);
    }
    for (const auto& n : man.notes) std::fprintf(stderr, "%s\n", n.c_str());
    for (const auto& f : man.files) std::printf("wrote %s/%s\n", cfg.out.c_str(), f.c_str());
    return man.success ? 0 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
