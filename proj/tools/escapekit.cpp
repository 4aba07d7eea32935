// escapekit command-line entry point.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#define TOML_EXCEPTIONS 1
#include "CLI11.hpp"
#include "escapekit/eval.hpp"
#include "escapekit/metrics.hpp"
#include "escapekit/planner.hpp"
#include "escapekit/rng.hpp"
#include "escapekit/scenarios.hpp"
#include "json.hpp"
#include "toml.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace escapekit;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Bad input the user can fix: unknown names, malformed config, invalid fields.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json toml_to_json(const toml::node& n) {
  if (const auto* t = n.as_table()) {
    json out = json::object();
    for (const auto& [k, v] : *t) out[std::string(k.str())] = toml_to_json(v);
    return out;
  }
  if (const auto* a = n.as_array()) {
    json out = json::array();
    for (const auto& v : *a) out.push_back(toml_to_json(v));
    return out;
  }
  if (const auto* v = n.as_integer()) return v->get();
  if (const auto* v = n.as_floating_point()) return v->get();
  if (const auto* v = n.as_boolean()) return v->get();
  if (const auto* v = n.as_string()) return v->get();
  std::ostringstream ss;
  n.visit([&](const auto& v) {
    if constexpr (toml::is_date<decltype(v)> || toml::is_time<decltype(v)> || toml::is_date_time<decltype(v)>)
      ss << v;
  });
  return ss.str();  // dates and times stay textual
}

// TOML by default; JSON when the extension says so or the text starts with '{'.
json load_config_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  const bool is_json = path.extension() == ".json" || (first != std::string::npos && text[first] == '{');
  if (is_json) {
    try {
      return json::parse(text);
    } catch (const json::parse_error& e) {
      throw UsageError(path.string() + ": " + e.what());
    }
  }
  try {
    return toml_to_json(toml::parse(text, path.string()));
  } catch (const toml::parse_error& e) {
    const auto& src = e.source();
    throw UsageError(path.string() + ":" + std::to_string(src.begin.line) + ":" +
                     std::to_string(src.begin.column) + ": " + std::string(e.description()));
  }
}

eval::StudyConfig parse_config(const json& j, const std::string& where) {
  try {
    return eval::study_config_from_json(j);
  } catch (const std::exception& e) {
    throw UsageError(where + ": " + e.what());
  }
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<eval::Metric> parse_metrics(const std::string& s) {
  std::vector<eval::Metric> out;
  try {
    for (const auto& name : split_commas(s)) out.push_back(eval::metric_from_name(name));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return out;
}

void check_scenario(const std::string& name) {
  for (const auto& s : scenarios::scenario_names())
    if (s == name) return;
  std::string msg = "unknown scenario '" + name + "'; valid names:";
  for (const auto& s : scenarios::scenario_names()) msg += " " + s;
  throw UsageError(msg);
}

// Options shared by every subcommand.
struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int workers = 0;
};

// Config file, then CAGING_SEED, then --seed.
eval::StudyConfig resolve_config(const Common& c) {
  json j = c.config_path.empty() ? json::object() : load_config_file(c.config_path);
  const std::string where = c.config_path.empty() ? "config" : c.config_path;
  if (const char* env = std::getenv("CAGING_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used, 0);
      if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
      j["seed"] = v;
    } catch (const std::exception&) {
      throw UsageError(std::string("CAGING_SEED is not an unsigned integer: '") + env + "'");
    }
  }
  if (c.seed) j["seed"] = *c.seed;
  auto cfg = parse_config(j, where);
  if (c.workers != 0) cfg.workers = c.workers;
  return cfg;
}

std::string pick_scenario(const std::string& flag, const eval::StudyConfig& cfg) {
  const std::string s = flag.empty() ? cfg.scenarios.front() : flag;
  check_scenario(s);
  return s;
}

json base_config(const eval::StudyConfig& cfg, const std::string& scenario) {
  return cfg.scenario_configs.value(scenario, json::object());
}

std::ofstream open_output(const fs::path& p, std::ios::openmode mode = std::ios::out) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, mode | std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

json world_state_json(int step, const dynamics::WorldState& ws, const scenarios::ScenarioSpec& spec) {
  json bodies = json::array();
  for (std::size_t i = 0; i < ws.poses.size(); ++i) {
    const auto& p = ws.poses[i];
    const auto& t = ws.twists[i];
    bodies.push_back({{"name", spec.world.bodies()[i].def.name},
                      {"pose", {p.x, p.y, p.theta}},
                      {"twist", {t.vx, t.vy, t.omega}}});
  }
  json anchors = json::array();
  for (const auto& a : ws.anchors) anchors.push_back({a.x, a.y});
  return {{"step", step}, {"time", ws.time}, {"bodies", bodies}, {"anchors", anchors}};
}

// ---------------------------------------------------------------------------------------------

struct SimulateArgs {
  std::string scenario;
  fs::path out = "trajectory.jsonl";
  std::string dump_frames;
};

int cmd_simulate(const Common& c, const SimulateArgs& a) {
  const auto cfg = resolve_config(c);
  const std::string scenario = pick_scenario(a.scenario, cfg);
  const json base = base_config(cfg, scenario);

  std::ofstream dump;
  eval::StepObserver observer;
  std::optional<scenarios::ScenarioSpec> spec;
  if (!a.dump_frames.empty()) {
    dump = open_output(a.dump_frames);
    const auto rec_seed = derive_seed(cfg.seed, 0);
    spec = scenarios::make_scenario(scenario, scenarios::randomize_config(scenario, base, rec_seed));
    observer = [&](int step, const dynamics::WorldState& ws) {
      dump << world_state_json(step, ws, *spec).dump() << '\n';
    };
  }
  eval::Dataset d;
  d.records.push_back(eval::simulate_trajectory(scenario, base, 0, cfg.K, cfg.seed, cfg.k_hat, observer));
  d.generation_config = {{"scenario", scenario}, {"base_config", base}, {"n_traj", 1},
                         {"K", cfg.K},           {"k_hat", cfg.k_hat},  {"seed", cfg.seed}};
  if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
  eval::write_jsonl(a.out, d);
  const auto& r = d.records.front();
  std::cout << r.id << ": " << r.frames.size() << " frames, " << r.frames.back().k << " steps, success "
            << (r.success_label ? 1 : 0) << " -> " << a.out.string() << '\n';
  return 0;
}

struct GenerateArgs {
  std::string scenario;
  std::optional<int> n_traj;
  std::optional<int> K;
  fs::path out = "dataset.jsonl";
};

int cmd_generate(const Common& c, const GenerateArgs& a) {
  auto cfg = resolve_config(c);
  const std::string scenario = pick_scenario(a.scenario, cfg);
  if (a.n_traj) cfg.n_traj = *a.n_traj;
  if (a.K) cfg.K = *a.K;
  if (cfg.n_traj < 1) throw UsageError("--n-traj must be >= 1");
  if (cfg.K < 2) throw UsageError("--K must be >= 2");
  const auto d = eval::generate_dataset(scenario, base_config(cfg, scenario), cfg.n_traj, cfg.K, cfg.seed,
                                        cfg.k_hat);
  if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
  eval::write_jsonl(a.out, d);
  int success = 0;
  for (const auto& r : d.records) success += r.success_label;
  std::cout << d.records.size() << " trajectories (" << success << " successful) -> " << a.out.string() << '\n';
  return 0;
}

struct ScoreArgs {
  fs::path dataset;
  std::string metrics;
  fs::path out = "scores.csv";
  std::optional<std::size_t> M;
  std::optional<double> lambda;
  std::optional<int> rounds;
  std::optional<int> budget;
};

using RowKey = std::tuple<std::string, int, std::string>;  // traj_id, frame, metric

// Reads an existing scores file. A trailing partial line from an interrupted run is cut off.
std::set<RowKey> load_scored(const fs::path& path) {
  std::set<RowKey> done;
  if (!fs::exists(path) || fs::file_size(path) == 0) return done;
  std::string text;
  {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  std::ostringstream header;
  eval::write_scores_csv_header(header);
  if (text.rfind(header.str(), 0) != 0)
    throw std::runtime_error(path.string() + ": schema mismatch: expected header '" +
                             header.str().substr(0, header.str().size() - 1) + "'");
  if (text.back() != '\n') {
    text.erase(text.rfind('\n') + 1);
    fs::resize_file(path, text.size());
  }
  std::stringstream lines(text);
  std::string line;
  std::getline(lines, line);
  for (std::size_t n = 2; std::getline(lines, line); ++n) {
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    if (f.size() != 6)
      throw std::runtime_error(path.string() + ": line " + std::to_string(n) + ": schema mismatch: expected 6 fields");
    try {
      eval::metric_from_name(f[3]);
      done.emplace(f[1], std::stoi(f[2]), f[3]);
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ": line " + std::to_string(n) + ": schema mismatch: " + e.what());
    }
  }
  return done;
}

int cmd_score(const Common& c, const ScoreArgs& a) {
  auto cfg = resolve_config(c);
  if (!a.metrics.empty()) cfg.metrics = parse_metrics(a.metrics);
  if (a.M) cfg.score.M = *a.M;
  if (a.lambda) cfg.score.lambda = *a.lambda;
  if (a.rounds) cfg.score.escape_rounds = *a.rounds;
  if (a.budget) cfg.score.escape_budget = *a.budget;
  cfg.score.seed = cfg.seed;
  if (cfg.score.M < 1) throw UsageError("--M must be >= 1");
  if (cfg.score.lambda < 0) throw UsageError("--lambda must be >= 0");
  if (!fs::exists(a.dataset)) throw UsageError("dataset not found: " + a.dataset.string());

  const auto d = eval::read_jsonl(a.dataset);
  for (const auto& r : d.records) check_scenario(r.scenario);
  const auto done = load_scored(a.out);

  std::vector<std::size_t> todo;
  std::size_t missing = 0;
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    std::size_t m = 0;
    for (std::size_t f = 0; f < d.records[i].frames.size(); ++f)
      for (auto metric : cfg.metrics)
        m += !done.count({d.records[i].id, static_cast<int>(f), eval::metric_name(metric)});
    if (m) todo.push_back(i);
    missing += m;
  }
  if (todo.empty()) {
    std::cout << "nothing to score; " << a.out.string() << " is complete\n";
    return 0;
  }
  const bool fresh = !fs::exists(a.out) || fs::file_size(a.out) == 0;
  auto out = open_output(a.out, std::ios::app);
  if (fresh) eval::write_scores_csv_header(out);

  // Small batches keep finished work on disk if the run is interrupted.
  const std::size_t batch = 4;
  std::size_t written = 0;
  for (std::size_t b = 0; b < todo.size(); b += batch) {
    const std::span<const std::size_t> ids(todo.data() + b, std::min(batch, todo.size() - b));
    for (const auto& row : eval::score_records(d, ids, cfg.metrics, cfg.score, cfg.workers)) {
      if (done.count({row.traj_id, row.frame, eval::metric_name(row.metric)})) continue;
      eval::write_score_row(out, row);
      ++written;
    }
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + a.out.string());
  }
  std::cout << written << " rows (" << missing << " missing before) -> " << a.out.string() << '\n';
  return 0;
}

struct EscapeArgs {
  std::string scenario;
  std::string subroutine = "rrt";
  std::optional<int> rounds;
  std::optional<int> budget;
  std::string state;
};

int cmd_escape(const Common& c, const EscapeArgs& a) {
  const auto cfg = resolve_config(c);
  const std::string scenario = pick_scenario(a.scenario, cfg);
  const auto spec = scenarios::make_scenario(scenario, base_config(cfg, scenario));
  scenarios::SystemState z = spec.initial;
  if (!a.state.empty()) {
    try {
      const bool inline_json = a.state.find('{') != std::string::npos;
      z = planner::state_from_json(inline_json ? json::parse(a.state) : load_config_file(a.state));
    } catch (const UsageError&) {
      throw;
    } catch (const std::exception& e) {
      throw UsageError("--state: " + std::string(e.what()));
    }
  }
  metrics::EscapeOptions o;
  if (a.subroutine == "rrt")
    o.subroutine = metrics::Subroutine::rrt;
  else if (a.subroutine == "est")
    o.subroutine = metrics::Subroutine::est;
  else
    throw UsageError("unknown subroutine '" + a.subroutine + "'; valid names: est rrt");
  o.rounds = a.rounds.value_or(cfg.score.escape_rounds);
  o.per_iteration_budget = a.budget.value_or(cfg.score.escape_budget);
  o.seed = cfg.seed;
  o.planner = cfg.score.planner;
  if (o.rounds < 0 || o.per_iteration_budget < 1) throw UsageError("--rounds must be >= 0 and --budget >= 1");

  const auto r = metrics::effort_of_escape(spec, z, o);
  json j = {{"scenario", scenario},
            {"subroutine", a.subroutine},
            {"seed", cfg.seed},
            {"infinite", r.infinite()},
            {"effort", r.infinite() ? json("inf") : json(r.effort)},
            {"bound_history", r.bound_history},
            {"iterations_used", r.iterations_used}};
  if (r.path) {
    json nodes = json::array();
    for (const auto& n : r.path->nodes) nodes.push_back({{"z", planner::state_to_json(n.aug.z)}, {"c", n.aug.c}});
    j["path"] = nodes;
  } else {
    j["path"] = nullptr;
  }
  std::cout << j.dump(2) << '\n';
  return 0;
}

struct StudyArgs {
  std::string metrics;
  std::string output_dir;
};

int cmd_study(const Common& c, const StudyArgs& a) {
  auto cfg = resolve_config(c);
  if (!a.metrics.empty()) cfg.metrics = parse_metrics(a.metrics);
  if (!a.output_dir.empty()) cfg.output_dir = a.output_dir;
  const auto report = eval::run_study(cfg, &std::cerr);
  for (const auto& f : report.files) std::cout << f.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"escapekit: energy-bounded caging analysis for planar manipulation"};
  app.require_subcommand(1);
  app.fallthrough();

  Common common;
  common.workers = 0;
  app.add_option("--workers", common.workers, "worker threads for scoring (default: all cores)")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--config", common.config_path, "TOML or JSON config file")->check(CLI::ExistingFile);
  app.add_option("--seed", common.seed, "seed (overrides CAGING_SEED and the config)");

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "run one scripted trajectory");
  s->add_option("--scenario", sim.scenario, "scenario name");
  s->add_option("-o,--output", sim.out, "trajectory JSONL file");
  s->add_option("--dump-frames", sim.dump_frames, "write every simulated world state as JSONL");

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "generate a labeled trajectory dataset");
  g->add_option("--scenario", gen.scenario, "scenario name");
  g->add_option("--n-traj", gen.n_traj, "number of trajectories");
  g->add_option("--K", gen.K, "frames per trajectory");
  g->add_option("-o,--output", gen.out, "dataset JSONL file");

  ScoreArgs sc;
  auto* sco = app.add_subcommand("score", "score dataset frames; resumes an existing output");
  sco->add_option("dataset", sc.dataset, "dataset JSONL file")->required();
  sco->add_option("--metrics", sc.metrics, "comma separated metric names");
  sco->add_option("-o,--output", sc.out, "scores CSV file");
  sco->add_option("--M", sc.M, "energy cost field size");
  sco->add_option("--lambda", sc.lambda, "softmax temperature, 1/J");
  sco->add_option("--rounds", sc.rounds, "escape rounds");
  sco->add_option("--budget", sc.budget, "escape iterations per round");

  EscapeArgs esc;
  auto* e = app.add_subcommand("escape", "effort of escape from one state");
  e->add_option("--scenario", esc.scenario, "scenario name");
  e->add_option("--subroutine", esc.subroutine, "est or rrt");
  e->add_option("--rounds", esc.rounds, "improvement rounds");
  e->add_option("--budget", esc.budget, "iterations per round");
  e->add_option("--state", esc.state, "start state as a JSON file or inline JSON (default: scenario start)");

  StudyArgs st;
  auto* stu = app.add_subcommand("study", "run the evaluation study and write the report directory");
  stu->add_option("--metrics", st.metrics, "comma separated metric names");
  stu->add_option("--output-dir", st.output_dir, "report directory (created if missing)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForVersion& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kExitUsage;
  }

  try {
    if (*s) return cmd_simulate(common, sim);
    if (*g) return cmd_generate(common, gen);
    if (*sco) return cmd_score(common, sc);
    if (*e) return cmd_escape(common, esc);
    if (*stu) return cmd_study(common, st);
  } catch (const UsageError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
