#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <random>

#include "dtr/errors.hpp"
#include "dtr/format.hpp"
#include "dtr/harness.hpp"

namespace {

enum ExitCode { kOk = 0, kConfigError = 1, kPartialFailure = 2 };

void print_notes(const std::vector<std::string>& notes) {
  for (const auto& n : notes) std::cerr << n << '\n';
}

int cmd_simulate(const std::string& config_path, int paths, int threads, bool dump, const std::string& out_dir,
                 long horizon) {
  auto config = dtr::load_config(config_path);
  if (paths > 0) config.paths = paths;
  if (threads > 0) config.threads = threads;
  if (horizon > 0) config.T = horizon;
  if (!out_dir.empty()) config.output_dir = out_dir;
  const auto sim = dtr::run_simulation(config);
  dtr::write_simulation(sim, config, config.output_dir, dump);
  for (const auto& c : sim.curves)
    std::cout << c.name << ": final mean regret " << dtr::format_double(c.mean.back()) << " (stderr "
              << dtr::format_double(c.stderr_.back()) << ", " << c.failed_paths << " failed paths)\n";
  return sim.failed_paths > 0 ? kPartialFailure : kOk;
}

int cmd_sweep(const std::string& config_path, int paths, int threads, bool dump, const std::string& out_dir) {
  auto config = dtr::load_config(config_path);
  if (paths > 0) config.paths = paths;
  if (threads > 0) config.threads = threads;
  if (!out_dir.empty()) config.output_dir = out_dir;
  const auto cells = dtr::run_sweep(config, dump);
  int failed = 0;
  for (const auto& c : cells) failed += c.failed_paths;
  std::cout << cells.size() << " cells written to " << config.output_dir.string() << '\n';
  return failed > 0 ? kPartialFailure : kOk;
}

int cmd_replay(const std::string& config_path, int threads, const std::string& out_dir) {
  auto config = dtr::load_config(config_path);
  if (!config.replay) throw dtr::ConfigError("replay", "missing replay section");
  if (threads > 0) config.threads = threads;
  if (!out_dir.empty()) config.output_dir = out_dir;
  const auto report = dtr::run_replay(config);
  print_notes(report.warnings);
  dtr::write_replay(report, config, config.output_dir);
  for (const auto& p : report.policies)
    std::cout << p.name << ": mean average reward " << dtr::format_double(p.mean) << " (stderr "
              << dtr::format_double(p.stderr_) << ", " << p.failed_reps << " failed reps)\n";
  return report.failed_reps > 0 ? kPartialFailure : kOk;
}

int cmd_validate(const std::string& config_path) {
  const auto config = dtr::load_config(config_path);
  for (const auto& n : dtr::validate_config(config)) std::cout << n << '\n';
  std::cout << "ok\n";
  return kOk;
}

dtr::ProblemInstance instance_for(const std::string& instance_path, const std::string& config_path) {
  if (!instance_path.empty()) return dtr::load_instance(instance_path);
  if (!config_path.empty()) {
    auto config = dtr::load_config(config_path);
    if (!config.has_instance) throw dtr::ConfigError("instance", "config has no instance");
    return config.instance;
  }
  return dtr::ProblemInstance::synthetic_1d();
}

int cmd_oracle(const std::string& instance_path, const std::string& config_path) {
  const auto inst = instance_for(instance_path, config_path);
  nlohmann::json out;
  out["switches"] = nlohmann::json::array();
  for (const auto& s : dtr::stage1_decision_switches(inst))
    out["switches"].push_back({{"x", s.x}, {"left_arm", s.left_arm}, {"right_arm", s.right_arm}});
  std::cout << out.dump(2) << '\n';
  return kOk;
}

int cmd_log(const std::string& instance_path, long records, std::uint64_t seed, const std::string& out_path,
            bool with_p) {
  const auto inst = instance_for(instance_path, "");
  dtr::Rng rng(seed);
  dtr::ReplayDataset data;
  data.d = inst.d;
  data.k1 = inst.k1;
  data.k2 = inst.k2;
  std::uniform_int_distribution<int> arm1(1, inst.k1), arm2(1, inst.k2);
  for (long i = 0; i < records; ++i) {
    dtr::LoggedRecord rec;
    auto& r = rec.round;
    r.x1 = dtr::sample_context(inst, rng);
    r.a1 = arm1(rng);
    auto s1 = dtr::step_stage1(inst, r.x1, r.a1, rng);
    r.y1 = s1.y1;
    r.x2 = s1.x2;
    r.a2 = arm2(rng);
    r.y2 = dtr::step_stage2(inst, r.x2, r.a2, rng);
    rec.propensity = 1.0 / (inst.k1 * inst.k2);
    data.records.push_back(std::move(rec));
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw dtr::ConfigError("out", "cannot write '" + out_path + "'");
  dtr::write_dataset(out, data, with_p);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage DTR bandit simulator and replay evaluator"};
  app.require_subcommand(1);

  std::string config, out_dir, instance, out_path;
  int paths = 0, threads = 0;
  long horizon = 0, records = 5000;
  std::uint64_t seed = 1;
  bool dump = false, with_p = false;

  auto* sim = app.add_subcommand("simulate", "run regret simulations");
  sim->add_option("--config", config, "experiment config (JSON)")->required();
  sim->add_option("--paths", paths, "override the number of paths");
  sim->add_option("--threads", threads, "worker threads (default: all cores)");
  sim->add_option("--horizon", horizon, "override T");
  sim->add_option("--output-dir", out_dir, "override output_dir");
  sim->add_flag("--dump-paths", dump, "also write per-path cumulative regret");

  auto* rep = app.add_subcommand("replay", "bootstrap replay evaluation on logged data");
  rep->add_option("--config", config, "experiment config (JSON)")->required();
  rep->add_option("--threads", threads, "worker threads");
  rep->add_option("--output-dir", out_dir, "override output_dir");

  auto* sw = app.add_subcommand("sweep", "run the (q, h) grid");
  sw->add_option("--config", config, "experiment config (JSON)")->required();
  sw->add_option("--paths", paths, "override the number of paths");
  sw->add_option("--threads", threads, "worker threads");
  sw->add_option("--output-dir", out_dir, "override output_dir");
  sw->add_flag("--dump-paths", dump, "also write per-path cumulative regret");

  auto* val = app.add_subcommand("validate", "check a config and everything it references");
  val->add_option("--config", config, "experiment config (JSON)")->required();

  auto* orc = app.add_subcommand("oracle", "report where the first-stage oracle action switches (d = 1)");
  orc->add_option("--instance", instance, "instance JSON (default: built-in synthetic instance)");
  orc->add_option("--config", config, "take the instance from an experiment config");

  auto* lg = app.add_subcommand("log", "write a uniformly logged dataset drawn from an instance");
  lg->add_option("--instance", instance, "instance JSON (default: built-in synthetic instance)");
  lg->add_option("--records", records, "number of records")->check(CLI::PositiveNumber);
  lg->add_option("--seed", seed, "RNG seed");
  lg->add_option("--out", out_path, "output CSV")->required();
  lg->add_flag("--with-propensity", with_p, "write the known logging propensity as column p");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*sim) return cmd_simulate(config, paths, threads, dump, out_dir, horizon);
    if (*sw) return cmd_sweep(config, paths, threads, dump, out_dir);
    if (*rep) return cmd_replay(config, threads, out_dir);
    if (*val) return cmd_validate(config);
    if (*orc) return cmd_oracle(instance, config);
    if (*lg) return cmd_log(instance, records, seed, out_path, with_p);
  } catch (const dtr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const dtr::SchemaError& e) {
    std::cerr << "schema error: " << e.what() << '\n';
    return kConfigError;
  } catch (const dtr::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kPartialFailure;
  }
  return kOk;
}
