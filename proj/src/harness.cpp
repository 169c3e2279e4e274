#include "dtr/harness.hpp"

#include <omp.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "dtr/errors.hpp"
#include "dtr/format.hpp"

namespace dtr {

namespace fs = std::filesystem;

// ---- config ----

namespace {

const std::set<std::string> kTopLevelKeys = {"instance", "policies", "T", "horizon", "paths", "base_seed",
                                             "regret_precision", "output_dir", "record_every", "threads",
                                             "sweep", "replay"};

template <class T>
T get_field(const nlohmann::json& j, const std::string& key, const std::string& field, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(field.empty() ? key : field + "/" + key, "wrong type");
  }
}

void check_name(const std::string& name, const std::string& field) {
  if (name.empty()) throw ConfigError(field, "policy name must not be empty");
  for (char c : name)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.'))
      throw ConfigError(field, "policy name '" + name + "' may only use letters, digits, '_', '-', '.'");
}

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.is_absolute() || base.empty()) return p;
  return base / p;
}

void fill_shape(PolicyConfig& p, int d, int k1, int k2) {
  p.d = d;
  p.k1 = k1;
  p.k2 = k2;
}

}  // namespace

ExperimentConfig config_from_json(const nlohmann::json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("", "config must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!kTopLevelKeys.count(key)) throw ConfigError(key, "unknown config field");

  ExperimentConfig c;
  if (j.contains("instance")) {
    const auto& inst = j["instance"];
    try {
      if (inst.is_string())
        c.instance = load_instance(resolve(inst.get<std::string>(), base_dir));
      else
        c.instance = instance_from_json(inst);
    } catch (const SchemaError& e) {
      throw ConfigError("instance", e.what());
    }
    c.has_instance = true;
  }

  c.T = get_field<long>(j, j.contains("horizon") ? "horizon" : "T", "", c.T);
  c.paths = get_field<int>(j, "paths", "", c.paths);
  c.base_seed = get_field<std::uint64_t>(j, "base_seed", "", c.base_seed);
  c.regret_precision = get_field<double>(j, "regret_precision", "", c.regret_precision);
  c.output_dir = get_field<std::string>(j, "output_dir", "", c.output_dir.string());
  c.record_every = get_field<long>(j, "record_every", "", c.record_every);
  c.threads = get_field<int>(j, "threads", "", c.threads);
  if (c.T < 1) throw ConfigError("T", "must be >= 1");
  if (c.paths < 1) throw ConfigError("paths", "must be >= 1");
  if (!(c.regret_precision > 0.0)) throw ConfigError("regret_precision", "must be > 0");
  if (c.record_every < 1) throw ConfigError("record_every", "must be >= 1");
  if (c.threads < 0) throw ConfigError("threads", "must be >= 0");

  if (!j.contains("policies") || !j["policies"].is_array() || j["policies"].empty())
    throw ConfigError("policies", "expected a non-empty array");
  std::set<std::string> names;
  for (std::size_t i = 0; i < j["policies"].size(); ++i) {
    const std::string field = "policies/" + std::to_string(i);
    PolicyConfig p = policy_config_from_json(j["policies"][i], field);
    check_name(p.name, field + "/name");
    if (!names.insert(p.name).second) throw ConfigError(field + "/name", "duplicate policy name '" + p.name + "'");
    c.policies.push_back(p);
  }

  if (j.contains("sweep")) {
    const auto& s = j["sweep"];
    if (!s.is_object()) throw ConfigError("sweep", "expected an object");
    SweepGrid g;
    g.q = get_field<std::vector<int>>(s, "q", "sweep", {});
    g.h = get_field<std::vector<double>>(s, "h", "sweep", {});
    if (g.q.empty()) throw ConfigError("sweep/q", "grid must not be empty");
    if (g.h.empty()) throw ConfigError("sweep/h", "grid must not be empty");
    for (int q : g.q)
      if (q < 1) throw ConfigError("sweep/q", "entries must be >= 1");
    for (double h : g.h)
      if (!(h > 0.0)) throw ConfigError("sweep/h", "entries must be > 0");
    c.sweep = g;
  }

  if (j.contains("replay")) {
    const auto& r = j["replay"];
    if (!r.is_object()) throw ConfigError("replay", "expected an object");
    ReplaySettings s;
    const auto dataset = get_field<std::string>(r, "dataset", "replay", "");
    if (dataset.empty()) throw ConfigError("replay/dataset", "missing");
    s.dataset = resolve(dataset, base_dir);
    s.schema.d = get_field<int>(r, "d", "replay", 0);
    s.schema.k1 = get_field<int>(r, "k1", "replay", 0);
    s.schema.k2 = get_field<int>(r, "k2", "replay", 0);
    s.T = get_field<long>(r, "T", "replay", s.T);
    s.bootstrap_reps = get_field<int>(r, "bootstrap_reps", "replay", s.bootstrap_reps);
    if (r.contains("propensity")) s.propensity = propensity_spec_from_json(r["propensity"], "replay/propensity");
    if (s.T < 1) throw ConfigError("replay/T", "must be >= 1");
    if (s.bootstrap_reps < 1) throw ConfigError("replay/bootstrap_reps", "must be >= 1");
    c.replay = s;
  }

  if (c.has_instance) {
    for (std::size_t i = 0; i < c.policies.size(); ++i) {
      fill_shape(c.policies[i], c.instance.d, c.instance.k1, c.instance.k2);
      c.policies[i].validate("policies/" + std::to_string(i));
    }
  } else if (!c.replay) {
    throw ConfigError("instance", "missing (required unless the config only drives replay)");
  }
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("", std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j, path.parent_path());
}

std::uint64_t policy_seed(std::uint64_t base_seed, int path_index, int policy_index) {
  const auto splitmix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  };
  return splitmix(path_seed(base_seed, path_index)) ^ splitmix(0x632be59bd9b4e019ull + static_cast<std::uint64_t>(policy_index));
}

// ---- simulation ----

std::vector<long> recorded_rounds(long T, long every) {
  DTR_REQUIRE(T >= 1 && every >= 1, "recorded_rounds: T and stride must be >= 1");
  std::vector<long> out;
  for (long t = every; t <= T; t += every) out.push_back(t);
  if (out.empty() || out.back() != T) out.push_back(T);
  return out;
}

PathResult simulate_path(const ProblemInstance& inst, Policy& policy, long T, std::uint64_t env_seed,
                         double precision, const std::vector<long>& rounds) {
  PathResult res;
  res.cumulative.reserve(rounds.size());
  res.min_step_regret = std::numeric_limits<double>::infinity();
  Rng rng(env_seed);
  double cumulative = 0.0;
  std::size_t next = 0;
  for (long t = 1; t <= T; ++t) {
    RoundRecord r;
    r.x1 = sample_context(inst, rng);
    r.a1 = policy.choose_stage1(r.x1);
    auto s1 = step_stage1(inst, r.x1, r.a1, rng);
    r.y1 = s1.y1;
    r.x2 = std::move(s1.x2);
    r.a2 = policy.choose_stage2(r.y1, r.x2);
    r.y2 = step_stage2(inst, r.x2, r.a2, rng);
    const StepRegret step = per_step_regret(inst, r, precision);
    if (!step.within_precision) ++res.imprecise_steps;
    res.min_step_regret = std::min(res.min_step_regret, step.regret);
    cumulative += step.regret;
    policy.finish_round(r);
    if (next < rounds.size() && rounds[next] == t) {
      res.cumulative.push_back(cumulative);
      ++next;
    }
  }
  return res;
}

std::pair<double, double> mean_and_stderr(const std::vector<double>& values) {
  if (values.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  double sum = 0.0;
  for (double v : values) sum += v;
  const double n = static_cast<double>(values.size());
  const double mean = sum / n;
  if (values.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

SimulationResult run_simulation(const ExperimentConfig& config, Execution mode) {
  if (!config.has_instance) throw ConfigError("instance", "simulation needs a problem instance");
  config.instance.validate();
  const auto rounds = recorded_rounds(config.T, config.record_every);
  const int npol = static_cast<int>(config.policies.size());
  const int npaths = config.paths;
  const long tasks = static_cast<long>(npol) * npaths;
  std::vector<PathResult> results(static_cast<std::size_t>(tasks));

  const auto run_task = [&](long task) {
    const int pi = static_cast<int>(task / npaths);
    const int path = static_cast<int>(task % npaths);
    PathResult& out = results[static_cast<std::size_t>(task)];
    try {
      auto policy = make_policy(config.policies[pi], &config.instance,
                                policy_seed(config.base_seed, path, pi), config.regret_precision);
      out = simulate_path(config.instance, *policy, config.T, path_seed(config.base_seed, path),
                          config.regret_precision, rounds);
    } catch (const std::exception& e) {
      out = PathResult{};
      out.failed = true;
      out.error = e.what();
    }
  };

  if (mode == Execution::serial) {
    for (long task = 0; task < tasks; ++task) run_task(task);
  } else {
    const int threads = config.threads > 0 ? config.threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
    for (long task = 0; task < tasks; ++task) run_task(task);
  }

  SimulationResult sim;
  for (int pi = 0; pi < npol; ++pi) {
    PolicyCurve curve;
    curve.name = config.policies[pi].name;
    curve.variant = config.policies[pi].variant;
    curve.t = rounds;
    for (int path = 0; path < npaths; ++path) {
      auto& r = results[static_cast<std::size_t>(pi) * npaths + path];
      if (r.failed) ++curve.failed_paths;
      curve.paths.push_back(std::move(r));
    }
    std::vector<double> column;
    for (std::size_t k = 0; k < rounds.size(); ++k) {
      column.clear();
      for (const auto& p : curve.paths)
        if (!p.failed) column.push_back(p.cumulative[k]);
      const auto [m, se] = mean_and_stderr(column);
      curve.mean.push_back(m);
      curve.stderr_.push_back(se);
    }
    sim.failed_paths += curve.failed_paths;
    sim.curves.push_back(std::move(curve));
  }
  return sim;
}

namespace {

std::ofstream open_output(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  return out;
}

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

}  // namespace

void write_simulation(const SimulationResult& result, const ExperimentConfig& config, const fs::path& dir,
                      bool dump_paths) {
  fs::create_directories(dir);
  nlohmann::json summary;
  summary["T"] = config.T;
  summary["paths"] = config.paths;
  summary["base_seed"] = config.base_seed;
  summary["record_every"] = config.record_every;
  summary["regret_precision"] = config.regret_precision;
  summary["failed_paths"] = result.failed_paths;
  summary["policies"] = nlohmann::json::array();

  for (std::size_t pi = 0; pi < result.curves.size(); ++pi) {
    const auto& c = result.curves[pi];
    auto out = open_output(dir / ("regret_" + c.name + ".csv"));
    out << "t,mean_regret,stderr\n";
    if (c.failed_paths < static_cast<int>(c.paths.size()))
      for (std::size_t k = 0; k < c.t.size(); ++k)
        out << c.t[k] << ',' << format_double(c.mean[k]) << ',' << format_double(c.stderr_[k]) << '\n';

    if (dump_paths) {
      auto dump = open_output(dir / ("paths_" + c.name + ".csv"));
      dump << "path,seed,t,cumulative_regret\n";
      for (std::size_t p = 0; p < c.paths.size(); ++p) {
        if (c.paths[p].failed) continue;
        const auto seed = path_seed(config.base_seed, static_cast<int>(p));
        for (std::size_t k = 0; k < c.t.size(); ++k)
          dump << p << ',' << seed << ',' << c.t[k] << ',' << format_double(c.paths[p].cumulative[k]) << '\n';
      }
    }

    long imprecise = 0;
    double min_step = std::numeric_limits<double>::infinity();
    nlohmann::json errors = nlohmann::json::array();
    for (std::size_t p = 0; p < c.paths.size(); ++p) {
      const auto& path = c.paths[p];
      if (path.failed) {
        errors.push_back({{"path", p}, {"error", path.error}});
        continue;
      }
      imprecise += path.imprecise_steps;
      min_step = std::min(min_step, path.min_step_regret);
    }
    nlohmann::json entry{{"name", c.name},
                         {"variant", to_string(c.variant)},
                         {"config", policy_config_to_json(config.policies[pi])},
                         {"final_mean_regret", number_or_null(c.mean.back())},
                         {"final_stderr", number_or_null(c.stderr_.back())},
                         {"failed_paths", c.failed_paths},
                         {"imprecise_oracle_steps", imprecise},
                         {"min_step_regret", number_or_null(min_step)},
                         {"curve", "regret_" + c.name + ".csv"}};
    if (!errors.empty()) entry["errors"] = errors;
    summary["policies"].push_back(entry);
  }
  auto out = open_output(dir / "summary.json");
  out << summary.dump(2) << '\n';
}

// ---- sweep ----

ExperimentConfig sweep_cell_config(const ExperimentConfig& config, int q, double h) {
  ExperimentConfig cell = config;
  cell.sweep.reset();
  for (auto& p : cell.policies) {
    p.q = q;
    p.h1 = p.h2 = h;
  }
  return cell;
}

std::vector<SweepCell> run_sweep(const ExperimentConfig& config, bool dump_paths) {
  if (!config.sweep) throw ConfigError("sweep", "missing");
  const auto& g = *config.sweep;
  if (g.q.empty() || g.h.empty()) throw ConfigError("sweep", "grid must not be empty");
  fs::create_directories(config.output_dir);
  std::vector<SweepCell> cells;
  for (int q : g.q) {
    for (double h : g.h) {
      SweepCell cell{q, h, "q" + std::to_string(q) + "_h" + format_double(h), 0};
      const auto cfg = sweep_cell_config(config, q, h);
      const auto sim = run_simulation(cfg);
      write_simulation(sim, cfg, config.output_dir / cell.dir, dump_paths);
      cell.failed_paths = sim.failed_paths;
      cells.push_back(cell);
    }
  }
  auto index = open_output(config.output_dir / "sweep_index.csv");
  index << "q,h,dir,failed_paths\n";
  for (const auto& c : cells)
    index << c.q << ',' << format_double(c.h) << ',' << c.dir.string() << ',' << c.failed_paths << '\n';
  return cells;
}

// ---- replay ----

namespace {

ReplayDataset prepared_dataset(const ExperimentConfig& config, ReplayReport& report) {
  const auto& s = *config.replay;
  ReplayDataset data = load_dataset(s.dataset, s.schema, &report.warnings);
  if (config.has_instance &&
      (data.d != config.instance.d || data.k1 != config.instance.k1 || data.k2 != config.instance.k2))
    throw SchemaError("dataset shape does not match the configured instance");
  report.records = data.records.size();
  if (data.records.empty()) return data;
  report.propensity = fit_propensities(data, s.propensity);
  for (const auto& w : report.propensity.warnings) report.warnings.push_back(w);
  return data;
}

std::vector<PolicyConfig> shaped_policies(const ExperimentConfig& config, const ReplayDataset& data) {
  auto policies = config.policies;
  for (std::size_t i = 0; i < policies.size(); ++i) {
    fill_shape(policies[i], data.d, data.k1, data.k2);
    policies[i].validate("policies/" + std::to_string(i));
    if (policies[i].variant == PolicyVariant::oracle && !config.has_instance)
      throw ConfigError("policies/" + std::to_string(i), "oracle replay needs an instance");
  }
  return policies;
}

}  // namespace

ReplayReport run_replay(const ExperimentConfig& config) {
  if (!config.replay) throw ConfigError("replay", "missing");
  const auto& s = *config.replay;
  ReplayReport report;
  ReplayDataset data = prepared_dataset(config, report);
  if (data.records.empty()) throw EvaluationFailed("replay: dataset has no records");
  const auto policies = shaped_policies(config, data);

  const int npol = static_cast<int>(policies.size());
  const int reps = s.bootstrap_reps;
  const long tasks = static_cast<long>(npol) * reps;
  std::vector<ReplayRep> results(static_cast<std::size_t>(tasks));
  const ProblemInstance* inst = config.has_instance ? &config.instance : nullptr;
  const int threads = config.threads > 0 ? config.threads : omp_get_max_threads();

#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (long task = 0; task < tasks; ++task) {
    const int pi = static_cast<int>(task / reps);
    const int rep = static_cast<int>(task % reps);
    ReplayRep& out = results[static_cast<std::size_t>(task)];
    out.rep = rep;
    try {
      Rng rng(path_seed(config.base_seed, rep));
      const auto stream = bootstrap_uniformize(data, rng, s.propensity.floor);
      auto policy = make_policy(policies[pi], inst, policy_seed(config.base_seed, rep, pi), config.regret_precision);
      out.result = replay(*policy, stream, s.T);
    } catch (const std::exception& e) {
      out.failed = true;
      out.error = e.what();
    }
  }

  for (int pi = 0; pi < npol; ++pi) {
    PolicyReplayReport pr;
    pr.name = policies[pi].name;
    std::vector<double> values;
    for (int rep = 0; rep < reps; ++rep) {
      auto& r = results[static_cast<std::size_t>(pi) * reps + rep];
      if (r.failed)
        ++pr.failed_reps;
      else
        values.push_back(r.result.average);
      pr.reps.push_back(std::move(r));
    }
    std::tie(pr.mean, pr.stderr_) = mean_and_stderr(values);
    report.failed_reps += pr.failed_reps;
    report.policies.push_back(std::move(pr));
  }
  return report;
}

void write_replay(const ReplayReport& report, const ExperimentConfig& config, const fs::path& dir) {
  fs::create_directories(dir);
  auto reps = open_output(dir / "replay_reps.csv");
  reps << "policy,rep,status,average_reward,matched,consumed,partial\n";
  nlohmann::json summary;
  summary["records"] = report.records;
  summary["T"] = config.replay->T;
  summary["bootstrap_reps"] = config.replay->bootstrap_reps;
  summary["base_seed"] = config.base_seed;
  summary["propensity_fitted"] = report.propensity.fitted;
  summary["warnings"] = report.warnings;
  summary["failed_reps"] = report.failed_reps;
  summary["policies"] = nlohmann::json::array();
  for (const auto& p : report.policies) {
    long partial = 0;
    double matched = 0.0;
    int ok = 0;
    for (const auto& r : p.reps) {
      if (r.failed) {
        reps << p.name << ',' << r.rep << ",failed,,,,\n";
        continue;
      }
      reps << p.name << ',' << r.rep << ",ok," << format_double(r.result.average) << ',' << r.result.matched << ','
           << r.result.consumed << ',' << (r.result.partial ? 1 : 0) << '\n';
      partial += r.result.partial ? 1 : 0;
      matched += static_cast<double>(r.result.matched);
      ++ok;
    }
    nlohmann::json entry{{"name", p.name},
                         {"mean_average_reward", number_or_null(p.mean)},
                         {"stderr", number_or_null(p.stderr_)},
                         {"failed_reps", p.failed_reps},
                         {"partial_reps", partial},
                         {"mean_matched", ok ? nlohmann::json(matched / ok) : nlohmann::json()}};
    // Partial reps average over the matched records only, not over T.
    if (partial > 0) entry["partial_average_divides_by"] = "matched";
    summary["policies"].push_back(entry);
  }
  auto out = open_output(dir / "replay_summary.json");
  out << summary.dump(2) << '\n';
}

// ---- validate ----

std::vector<std::string> validate_config(const ExperimentConfig& config) {
  std::vector<std::string> notes;
  if (config.has_instance) {
    config.instance.validate();
    notes.push_back("instance: d=" + std::to_string(config.instance.d) + " k1=" + std::to_string(config.instance.k1) +
                    " k2=" + std::to_string(config.instance.k2));
  }
  for (const auto& p : config.policies) notes.push_back("policy " + p.name + " (" + to_string(p.variant) + ")");
  if (config.sweep)
    notes.push_back("sweep: " + std::to_string(config.sweep->q.size() * config.sweep->h.size()) + " cells");
  if (config.replay) {
    ReplayReport scratch;
    ReplayDataset data = load_dataset(config.replay->dataset, config.replay->schema, &scratch.warnings);
    if (config.has_instance &&
        (data.d != config.instance.d || data.k1 != config.instance.k1 || data.k2 != config.instance.k2))
      throw SchemaError("dataset shape does not match the configured instance");
    shaped_policies(config, data);
    notes.push_back("replay dataset: " + std::to_string(data.records.size()) + " records");
    for (const auto& w : scratch.warnings) notes.push_back("warning: " + w);
  }
  return notes;
}

}  // namespace dtr
