#include "escapekit/eval.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "escapekit/rng.hpp"

namespace escapekit::eval {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

json vec_json(Vec2 v) { return json::array({v.x, v.y}); }
Vec2 vec_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double inf_if_null(const json& j) { return j.is_null() ? kInf : j.get<double>(); }

bool is_object_ee_pair(const dynamics::ContactPoint& c, std::size_t obj, std::size_t ee) {
  return (c.body_a == obj && c.body_b == ee) || (c.body_a == ee && c.body_b == obj);
}

}  // namespace

// ---------------------------------------------------------------------------------------------
// Dataset generation and labels

std::vector<bool> label_captured(const std::vector<bool>& in, int k_hat) {
  if (k_hat < 0) throw std::invalid_argument("label_captured: k_hat must be >= 0");
  const std::size_t n = in.size();
  std::vector<bool> out(n, false);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t end = std::min(n - 1, k + static_cast<std::size_t>(k_hat));
    bool all = true;
    for (std::size_t j = k; j <= end && all; ++j) all = in[j];
    out[k] = all;
  }
  return out;
}

std::vector<bool> label_captured(const TrajectoryRecord& record, const ScenarioSpec& spec, int k_hat) {
  std::vector<bool> m;
  for (const auto& f : record.frames) m.push_back(scenarios::capture_contains(spec, f.z, f.z));
  return label_captured(m, k_hat);
}

namespace {

struct StepSample {
  SystemState z;
  std::vector<dynamics::ContactPoint> contacts;
};

}  // namespace

TrajectoryRecord simulate_trajectory(const std::string& scenario, const json& base, std::size_t index, int K,
                                     std::uint64_t seed, int k_hat, const StepObserver& observer) {
  if (K < 2) throw std::invalid_argument("K must be >= 2");
  TrajectoryRecord rec;
  rec.seed = derive_seed(seed, index);
  rec.scenario = scenario;
  char id[32];
  std::snprintf(id, sizeof id, "%s-%04zu", scenario.c_str(), index);
  rec.id = id;
  const ScenarioSpec spec = scenarios::make_scenario(scenario, scenarios::randomize_config(scenario, base, rec.seed));
  rec.config = spec.config;

  scenarios::Rollout ro(spec, spec.initial);
  std::vector<StepSample> steps{{spec.initial, {}}};
  if (observer) observer(0, ro.world_state());
  dynamics::SimError err;
  bool failed = false;
  const auto keep = [&](const dynamics::StepReport& rep) {
    std::vector<dynamics::ContactPoint> out;
    if (spec.ee == scenarios::kNone) return out;
    for (const auto& c : rep.contacts)
      if (is_object_ee_pair(c, spec.object, spec.ee)) out.push_back(c);
    return out;
  };
  for (int tick = 0; !failed; ++tick) {
    const auto cmd = scenarios::scripted_control(spec, ro.state(), tick, rec.seed);
    if (cmd.finished) break;
    ro.command(cmd);
    for (int i = 0; i < spec.script.control_period; ++i) {
      if (!ro.step({}, err)) {
        failed = true;  // the trajectory ends at the last valid state
        break;
      }
      steps.push_back({ro.state(), keep(ro.report())});
      if (observer) observer(static_cast<int>(steps.size() - 1), ro.world_state());
    }
  }
  // Frame 0 has no incoming step; it takes the contacts of the first step.
  if (steps.size() > 1) steps[0].contacts = steps[1].contacts;

  const std::size_t N = steps.size() - 1;
  const double pair_mu = std::sqrt(spec.mu * spec.ee_mu);
  for (int j = 0; j < K; ++j) {
    const auto i = static_cast<std::size_t>(std::lround(j * static_cast<double>(N) / (K - 1)));
    Frame f;
    f.k = static_cast<int>(i);
    f.z = steps[i].z;
    f.contacts = steps[i].contacts;
    f.mu = pair_mu;
    f.object_mu = spec.mu;
    if (spec.ee == scenarios::kNone) {
      f.min_distance = kInf;
    } else {
      const auto ws = scenarios::to_world_state(spec, f.z);
      f.min_distance = std::max(0.0, dynamics::min_body_distance(spec.world, ws, spec.object, spec.ee));
    }
    rec.frames.push_back(std::move(f));
  }
  // Duplicate frame indices only occur for trajectories shorter than K steps.
  rec.success_label = scenarios::success_contains(spec, rec.frames.back().z);
  rec.captured_labels = label_captured(rec, spec, k_hat);
  return rec;
}

Dataset generate_dataset(const std::string& scenario, const json& base_config, int n_traj, int K,
                         std::uint64_t seed, int k_hat) {
  if (n_traj < 1) throw std::invalid_argument("generate_dataset: n_traj must be >= 1");
  if (K < 2) throw std::invalid_argument("generate_dataset: K must be >= 2");
  Dataset d;
  const json base = base_config.is_object() ? base_config : json::object();
  d.generation_config = {{"scenario", scenario}, {"base_config", base}, {"n_traj", n_traj},
                         {"K", K},               {"k_hat", k_hat},      {"seed", seed}};
  d.records.resize(static_cast<std::size_t>(n_traj));
  for (int i = 0; i < n_traj; ++i)
    d.records[i] = simulate_trajectory(scenario, base, static_cast<std::size_t>(i), K, seed, k_hat);
  return d;
}

Dataset regenerate(const json& g) {
  return generate_dataset(g.at("scenario").get<std::string>(), g.at("base_config"), g.at("n_traj").get<int>(),
                          g.at("K").get<int>(), g.at("seed").get<std::uint64_t>(), g.at("k_hat").get<int>());
}

// ---------------------------------------------------------------------------------------------
// JSON lines

json record_to_json(const TrajectoryRecord& r) {
  json frames = json::array();
  for (const auto& f : r.frames) {
    json contacts = json::array();
    for (const auto& c : f.contacts)
      contacts.push_back({{"point", vec_json(c.point)},
                          {"normal", vec_json(c.normal)},
                          {"normal_force", c.normal_force},
                          {"tangent_force", c.tangent_force},
                          {"slip_speed", c.slip_speed},
                          {"body_a", c.body_a},
                          {"body_b", c.body_b}});
    frames.push_back({{"k", f.k},
                      {"z", planner::state_to_json(f.z)},
                      {"contacts", std::move(contacts)},
                      {"min_distance", finite_or_null(f.min_distance)},
                      {"mu", f.mu},
                      {"object_mu", f.object_mu}});
  }
  json labels = json::array();
  for (bool b : r.captured_labels) labels.push_back(b);
  return {{"id", r.id},
          {"scenario", r.scenario},
          {"seed", r.seed},
          {"config", r.config},
          {"frames", std::move(frames)},
          {"success_label", r.success_label},
          {"captured_labels", std::move(labels)}};
}

TrajectoryRecord record_from_json(const json& j) {
  TrajectoryRecord r;
  r.id = j.at("id").get<std::string>();
  r.scenario = j.at("scenario").get<std::string>();
  r.seed = j.value("seed", std::uint64_t{0});
  r.config = j.value("config", json::object());
  int prev = -1;
  for (const auto& jf : j.at("frames")) {
    Frame f;
    f.k = jf.at("k").get<int>();
    if (f.k < prev) throw std::invalid_argument("frame indices must be non-decreasing");
    prev = f.k;
    f.z = planner::state_from_json(jf.at("z"));
    for (const auto& jc : jf.value("contacts", json::array())) {
      dynamics::ContactPoint c;
      c.point = vec_from(jc.at("point"));
      c.normal = vec_from(jc.at("normal"));
      c.normal_force = jc.at("normal_force").get<double>();
      c.tangent_force = jc.at("tangent_force").get<double>();
      c.slip_speed = jc.value("slip_speed", 0.0);
      c.body_a = jc.at("body_a").get<std::size_t>();
      c.body_b = jc.at("body_b").get<std::size_t>();
      f.contacts.push_back(c);
    }
    f.min_distance = inf_if_null(jf.at("min_distance"));
    f.mu = jf.at("mu").get<double>();
    f.object_mu = jf.value("object_mu", f.mu);
    r.frames.push_back(std::move(f));
  }
  r.success_label = j.at("success_label").get<bool>();
  for (const auto& b : j.at("captured_labels")) r.captured_labels.push_back(b.get<bool>());
  if (r.captured_labels.size() != r.frames.size())
    throw std::invalid_argument("captured_labels and frames differ in length");
  return r;
}

void write_jsonl(std::ostream& out, const Dataset& d) {
  for (const auto& r : d.records) out << record_to_json(r).dump() << '\n';
}

void write_jsonl(const std::filesystem::path& path, const Dataset& d) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_jsonl(out, d);
  if (!d.generation_config.is_null()) {
    std::ofstream meta(path.string() + ".provenance.json");
    meta << d.generation_config.dump(2) << '\n';
  }
}

Dataset read_jsonl(std::istream& in) {
  Dataset d;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      d.records.push_back(record_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error("line " + std::to_string(n) + ": " + e.what());
    }
  }
  return d;
}

Dataset read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  Dataset d;
  try {
    d = read_jsonl(in);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  std::ifstream meta(path.string() + ".provenance.json");
  if (meta) d.generation_config = json::parse(meta, nullptr, false);
  return d;
}

// ---------------------------------------------------------------------------------------------
// Ranking quality

double auc(std::span<const double> scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos = 0.0;
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);  // average 1-based rank of the tie block
    for (std::size_t t = i; t < j; ++t)
      if (labels[idx[t]]) {
        rank_sum += mid;
        pos += 1.0;
      }
    i = j;
  }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0.0 || neg == 0.0) throw std::invalid_argument("auc: needs at least one positive and one negative label");
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

double average_precision(std::span<const double> scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("average_precision: scores and labels differ in length");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double tp = 0.0;
  double sum = 0.0;
  for (std::size_t r = 0; r < idx.size(); ++r)
    if (labels[idx[r]]) {
      tp += 1.0;
      sum += tp / static_cast<double>(r + 1);
    }
  if (tp == 0.0) throw std::invalid_argument("average_precision: needs at least one positive label");
  return sum / tp;
}

// ---------------------------------------------------------------------------------------------
// Perturbations

const char* perturb_name(PerturbKind k) {
  switch (k) {
    case PerturbKind::friction: return "friction";
    case PerturbKind::velocity: return "velocity";
    case PerturbKind::position: return "position";
    case PerturbKind::force: return "force";
  }
  return "?";
}

PerturbKind perturb_from_name(const std::string& name) {
  for (auto k : {PerturbKind::friction, PerturbKind::velocity, PerturbKind::position, PerturbKind::force})
    if (name == perturb_name(k)) return k;
  throw std::invalid_argument("unknown perturbation '" + name + "' (valid: friction, velocity, position, force)");
}

double default_e_max(PerturbKind k) {
  switch (k) {
    case PerturbKind::friction: return 0.3;
    case PerturbKind::velocity: return 0.05;
    case PerturbKind::position: return 0.01;
    case PerturbKind::force: return 0.3;
  }
  return 0.0;
}

Dataset perturb_dataset(const Dataset& d, const PerturbationSpec& p) {
  if (!(p.e_max >= 0.0)) throw std::invalid_argument("perturb_dataset: e_max must be >= 0");
  Dataset out = d;
  if (p.e_max == 0.0) return out;
  Rng rng(derive_seed(p.seed, 0x9e27));
  const auto noise = [&](double scale) {
    const double m = rng.uniform(0.0, scale);
    return rng.uniform() < 0.5 ? -m : m;
  };
  for (auto& r : out.records)
    for (auto& f : r.frames) switch (p.kind) {
        case PerturbKind::friction: {
          const double e = noise(p.e_max);
          f.mu = std::max(0.0, f.mu + e);
          f.object_mu = std::max(0.0, f.object_mu + e);
          break;
        }
        case PerturbKind::velocity:
          f.z.object_twist.vx += noise(p.e_max);
          f.z.object_twist.vy += noise(p.e_max);
          f.z.object_twist.omega += noise(2.0 * p.e_max);
          break;
        case PerturbKind::position: {
          const double dx = noise(p.e_max);
          const double dy = noise(p.e_max);
          f.z.object_pose.x += dx;
          f.z.object_pose.y += dy;
          if (std::isfinite(f.min_distance)) f.min_distance = std::max(0.0, f.min_distance + noise(p.e_max));
          break;
        }
        case PerturbKind::force:
          for (auto& c : f.contacts) {
            c.normal_force = std::max(0.0, c.normal_force * (1.0 + noise(p.e_max)));
            c.tangent_force *= 1.0 + noise(p.e_max);
          }
          break;
      }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Scoring

const char* metric_name(Metric m) {
  switch (m) {
    case Metric::omega_cap: return "omega_cap";
    case Metric::omega_suc: return "omega_suc";
    case Metric::omega_esc_est: return "omega_esc_est";
    case Metric::omega_esc_rrt: return "omega_esc_rrt";
    case Metric::omega_force: return "omega_force";
  }
  return "?";
}

const std::vector<Metric>& all_metrics() {
  static const std::vector<Metric> m = {Metric::omega_cap, Metric::omega_suc, Metric::omega_esc_est,
                                        Metric::omega_esc_rrt, Metric::omega_force};
  return m;
}

Metric metric_from_name(const std::string& name) {
  for (Metric m : all_metrics())
    if (name == metric_name(m)) return m;
  throw std::invalid_argument("unknown metric '" + name +
                              "' (valid: omega_cap, omega_suc, omega_esc_est, omega_esc_rrt, omega_force)");
}

std::uint64_t frame_seed(std::uint64_t seed, std::size_t record, std::size_t frame) {
  return derive_seed(derive_seed(seed, record), frame);
}

std::vector<double> score_frame(const ScenarioSpec& spec, const Frame& f, std::span<const Metric> ms,
                                const ScoreConfig& cfg, std::uint64_t seed) {
  std::vector<double> out(ms.size(), 0.0);
  std::optional<metrics::CaptureScores> cap;
  for (std::size_t i = 0; i < ms.size(); ++i) switch (ms[i]) {
      case Metric::omega_cap:
      case Metric::omega_suc:
        if (!cap) {
          const auto field = metrics::energy_cost_field(spec, f.z, cfg.M, seed, cfg.planner);
          cap = metrics::capture_scores(spec, f.z, field, cfg.lambda);
        }
        out[i] = ms[i] == Metric::omega_cap ? cap->omega_cap : cap->omega_suc;
        break;
      case Metric::omega_esc_est:
      case Metric::omega_esc_rrt: {
        metrics::EscapeOptions opt;
        opt.subroutine = ms[i] == Metric::omega_esc_est ? metrics::Subroutine::est : metrics::Subroutine::rrt;
        opt.rounds = cfg.escape_rounds;
        opt.per_iteration_budget = cfg.escape_budget;
        opt.seed = derive_seed(seed, ms[i] == Metric::omega_esc_est ? 1 : 2);
        opt.planner = cfg.planner;
        out[i] = metrics::effort_of_escape(spec, f.z, opt).effort;
        break;
      }
      case Metric::omega_force: {
        metrics::ForceScoreInput in;
        in.contacts = f.contacts;
        in.mu = f.mu;
        in.min_distance = f.min_distance;
        out[i] = metrics::force_score(in, cfg.force_weights, cfg.d0);
        break;
      }
    }
  return out;
}

namespace {

struct WorkItem {
  std::size_t record;
  std::size_t frame;
};

// Planning models per record, plus per-frame variants when a frame's object friction differs.
class ModelCache {
 public:
  explicit ModelCache(const Dataset& d) {
    for (const auto& r : d.records) specs_.push_back(scenarios::make_scenario(r.scenario, r.config));
  }
  ScenarioSpec model(const Dataset& d, std::size_t rec, std::size_t frame) const {
    const Frame& f = d.records[rec].frames[frame];
    const ScenarioSpec& s = specs_[rec];
    if (f.object_mu == s.mu) return s;
    return scenarios::with_object_friction(s, f.object_mu);
  }
  const ScenarioSpec& base(std::size_t rec) const { return specs_[rec]; }

 private:
  std::vector<ScenarioSpec> specs_;
};

bool needs_model(std::span<const Metric> ms) {
  return std::any_of(ms.begin(), ms.end(), [](Metric m) { return m != Metric::omega_force; });
}

std::vector<ScoreRow> assemble(const Dataset& d, std::span<const Metric> ms, const std::vector<WorkItem>& items,
                               const std::vector<std::vector<double>>& values) {
  std::vector<ScoreRow> rows;
  rows.reserve(items.size() * ms.size());
  for (std::size_t w = 0; w < items.size(); ++w) {
    const auto& rec = d.records[items[w].record];
    for (std::size_t m = 0; m < ms.size(); ++m) {
      ScoreRow r;
      r.scenario = rec.scenario;
      r.traj_id = rec.id;
      r.frame = static_cast<int>(items[w].frame);
      r.metric = ms[m];
      r.value = values[w][m];
      r.label = ms[m] == Metric::omega_suc ? rec.success_label : bool(rec.captured_labels[items[w].frame]);
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

std::vector<WorkItem> work_items(const Dataset& d, std::span<const std::size_t> records) {
  std::vector<WorkItem> items;
  for (std::size_t r : records) {
    if (r >= d.records.size()) throw std::out_of_range("record index out of range");
    for (std::size_t f = 0; f < d.records[r].frames.size(); ++f) items.push_back({r, f});
  }
  return items;
}

std::vector<std::size_t> all_records(const Dataset& d) {
  std::vector<std::size_t> ids(d.records.size());
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

}  // namespace

std::vector<ScoreRow> score_dataset_serial(const Dataset& d, std::span<const Metric> ms, const ScoreConfig& cfg) {
  const auto items = work_items(d, all_records(d));
  std::vector<std::vector<double>> values(items.size());
  if (ms.empty()) return {};
  const std::optional<ModelCache> cache = needs_model(ms) ? std::optional<ModelCache>(d) : std::nullopt;
  for (std::size_t w = 0; w < items.size(); ++w) {
    const auto [r, f] = items[w];
    const Frame& fr = d.records[r].frames[f];
    if (cache)
      values[w] = score_frame(cache->model(d, r, f), fr, ms, cfg, frame_seed(cfg.seed, r, f));
    else
      values[w] = score_frame(ScenarioSpec{}, fr, ms, cfg, frame_seed(cfg.seed, r, f));
  }
  return assemble(d, ms, items, values);
}

std::vector<ScoreRow> score_dataset(const Dataset& d, std::span<const Metric> ms, const ScoreConfig& cfg,
                                    int workers) {
  if (workers == 1) return score_dataset_serial(d, ms, cfg);
  return score_records(d, all_records(d), ms, cfg, workers);
}

std::vector<ScoreRow> score_records(const Dataset& d, std::span<const std::size_t> records,
                                    std::span<const Metric> ms, const ScoreConfig& cfg, int workers) {
  if (ms.empty()) return {};
  const auto items = work_items(d, records);
  std::vector<std::vector<double>> values(items.size());
  const std::optional<ModelCache> cache = needs_model(ms) ? std::optional<ModelCache>(d) : std::nullopt;
  const int threads = workers > 0 ? workers : omp_get_max_threads();
  std::string error;
  const auto n = static_cast<std::int64_t>(items.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (std::int64_t w = 0; w < n; ++w) {
    const auto [r, f] = items[static_cast<std::size_t>(w)];
    const Frame& fr = d.records[r].frames[f];
    try {
      values[w] = cache ? score_frame(cache->model(d, r, f), fr, ms, cfg, frame_seed(cfg.seed, r, f))
                        : score_frame(ScenarioSpec{}, fr, ms, cfg, frame_seed(cfg.seed, r, f));
    } catch (const std::exception& e) {
#pragma omp critical
      if (error.empty()) error = d.records[r].id + " frame " + std::to_string(f) + ": " + e.what();
    }
  }
  if (!error.empty()) throw std::runtime_error(error);
  return assemble(d, ms, items, values);
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_scores_csv_header(std::ostream& out) { out << "scenario,traj_id,frame,metric,value,label\n"; }

void write_score_row(std::ostream& out, const ScoreRow& r) {
  out << r.scenario << ',' << r.traj_id << ',' << r.frame << ',' << metric_name(r.metric) << ','
      << format_double(r.value) << ',' << (r.label ? 1 : 0) << '\n';
}

}  // namespace escapekit::eval
