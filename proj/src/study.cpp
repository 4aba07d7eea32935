#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "escapekit/eval.hpp"
#include "escapekit/rng.hpp"

namespace escapekit::eval {

namespace {

std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}

template <class T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  for (const auto& [k, v] : j.items())
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; }))
      throw std::invalid_argument(where + ": unknown key '" + k + "'");
}

struct Summary {
  double median = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

Summary summarize(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  const double med = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  return {med, v.front(), v.back()};
}

void write_curve(const std::filesystem::path& path, const std::vector<std::pair<double, Summary>>& pts) {
  std::ofstream out(path);
  out << "x,y,ci_low,ci_high\n";
  for (const auto& [x, s] : pts)
    out << format_double(x) << ',' << format_double(s.median) << ',' << format_double(s.lo) << ','
        << format_double(s.hi) << '\n';
}

// Frame-level scores of one metric, in dataset order, with their labels.
void column(const std::vector<ScoreRow>& rows, Metric m, std::vector<double>& scores, std::vector<bool>& labels) {
  scores.clear();
  labels.clear();
  for (const auto& r : rows)
    if (r.metric == m) {
      scores.push_back(r.value);
      labels.push_back(r.label);
    }
}

// Trajectory-level success scores from the first k_bar frames of each record.
std::vector<double> trajectory_scores(const Dataset& d, const std::vector<ScoreRow>& rows, int k_bar) {
  std::vector<double> out;
  std::size_t i = 0;
  for (const auto& rec : d.records) {
    std::vector<double> s;
    for (std::size_t f = 0; f < rec.frames.size(); ++f, ++i)
      if (static_cast<int>(f) < k_bar) s.push_back(rows[i].value);
    out.push_back(metrics::trajectory_success_score(s, k_bar));
  }
  return out;
}

bool affects(Metric m, PerturbKind k) {
  if (m == Metric::omega_force) return k != PerturbKind::velocity;
  if (m == Metric::omega_cap) return k != PerturbKind::force;
  return false;
}

class Clock {
 public:
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    return s;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

}  // namespace

StudyConfig study_config_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("study config must be an object");
  check_keys(j,
             {"scenarios", "scenario_configs", "n_traj", "K", "k_hat", "k_bar", "metrics", "lambda", "M",
              "escape_rounds", "escape_budget", "force_weights", "d0", "planner", "m_sweep", "sweep_repeats",
              "perturbations", "e_max", "perturb_levels", "perturb_repeats", "seed", "workers", "output_dir"},
             "study config");
  StudyConfig c;
  take(j, "scenarios", c.scenarios);
  take(j, "scenario_configs", c.scenario_configs);
  take(j, "n_traj", c.n_traj);
  take(j, "K", c.K);
  take(j, "k_hat", c.k_hat);
  take(j, "k_bar", c.k_bar);
  if (j.contains("metrics")) {
    c.metrics.clear();
    for (const auto& m : j.at("metrics")) c.metrics.push_back(metric_from_name(m.get<std::string>()));
  }
  take(j, "lambda", c.score.lambda);
  take(j, "M", c.score.M);
  take(j, "escape_rounds", c.score.escape_rounds);
  take(j, "escape_budget", c.score.escape_budget);
  if (j.contains("force_weights")) {
    const auto& w = j.at("force_weights");
    check_keys(w, {"engage", "stick", "dist"}, "force_weights");
    take(w, "engage", c.score.force_weights.engage);
    take(w, "stick", c.score.force_weights.stick);
    take(w, "dist", c.score.force_weights.dist);
  }
  take(j, "d0", c.score.d0);
  if (j.contains("planner")) {
    const auto& p = j.at("planner");
    check_keys(p, {"est_radius", "goal_bias", "rrt_candidates", "weights"}, "planner");
    take(p, "est_radius", c.score.planner.est_radius);
    take(p, "goal_bias", c.score.planner.goal_bias);
    take(p, "rrt_candidates", c.score.planner.rrt_candidates);
    if (p.contains("weights")) {
      const auto& w = p.at("weights");
      check_keys(w, {"position", "angle", "velocity", "angular_velocity", "ee_position"}, "planner.weights");
      auto& mw = c.score.planner.weights;
      take(w, "position", mw.position);
      take(w, "angle", mw.angle);
      take(w, "velocity", mw.velocity);
      take(w, "angular_velocity", mw.angular_velocity);
      take(w, "ee_position", mw.ee_position);
    }
  }
  take(j, "m_sweep", c.m_sweep);
  take(j, "sweep_repeats", c.sweep_repeats);
  if (j.contains("perturbations")) {
    c.perturbations.clear();
    for (const auto& k : j.at("perturbations")) c.perturbations.push_back(perturb_from_name(k.get<std::string>()));
  }
  take(j, "e_max", c.e_max);
  for (const auto& [k, v] : c.e_max.items()) perturb_from_name(k);
  take(j, "perturb_levels", c.perturb_levels);
  take(j, "perturb_repeats", c.perturb_repeats);
  take(j, "seed", c.seed);
  take(j, "workers", c.workers);
  if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();

  for (const auto& s : c.scenarios) scenarios::make_scenario(s, c.scenario_configs.value(s, json::object()));
  if (c.n_traj < 1) throw std::invalid_argument("n_traj must be >= 1");
  if (c.K < 2) throw std::invalid_argument("K must be >= 2");
  if (c.k_hat < 0) throw std::invalid_argument("k_hat must be >= 0");
  if (c.k_bar < 1 || c.k_bar > c.K) throw std::invalid_argument("k_bar must be in [1, K]");
  if (c.score.M < 1) throw std::invalid_argument("M must be >= 1");
  for (std::size_t m : c.m_sweep)
    if (m < 1) throw std::invalid_argument("m_sweep entries must be >= 1");
  if (c.sweep_repeats < 1 || c.perturb_repeats < 1) throw std::invalid_argument("repeats must be >= 1");
  if (c.perturb_levels < 2) throw std::invalid_argument("perturb_levels must be >= 2");
  return c;
}

json study_config_to_json(const StudyConfig& c) {
  json metrics = json::array();
  for (Metric m : c.metrics) metrics.push_back(metric_name(m));
  json kinds = json::array();
  json e_max = json::object();
  for (PerturbKind k : c.perturbations) {
    kinds.push_back(perturb_name(k));
    e_max[perturb_name(k)] = c.e_max.value(perturb_name(k), default_e_max(k));
  }
  json configs = json::object();
  for (const auto& s : c.scenarios)
    configs[s] = scenarios::make_scenario(s, c.scenario_configs.value(s, json::object())).config;
  const auto& w = c.score.planner.weights;
  return {{"scenarios", c.scenarios},
          {"scenario_configs", configs},
          {"n_traj", c.n_traj},
          {"K", c.K},
          {"k_hat", c.k_hat},
          {"k_bar", c.k_bar},
          {"metrics", metrics},
          {"lambda", c.score.lambda},
          {"M", c.score.M},
          {"escape_rounds", c.score.escape_rounds},
          {"escape_budget", c.score.escape_budget},
          {"force_weights",
           {{"engage", c.score.force_weights.engage},
            {"stick", c.score.force_weights.stick},
            {"dist", c.score.force_weights.dist}}},
          {"d0", c.score.d0},
          {"planner",
           {{"est_radius", c.score.planner.est_radius},
            {"goal_bias", c.score.planner.goal_bias},
            {"rrt_candidates", c.score.planner.rrt_candidates},
            {"weights",
             {{"position", w.position},
              {"angle", w.angle},
              {"velocity", w.velocity},
              {"angular_velocity", w.angular_velocity},
              {"ee_position", w.ee_position}}}}},
          {"m_sweep", c.m_sweep},
          {"sweep_repeats", c.sweep_repeats},
          {"perturbations", kinds},
          {"e_max", e_max},
          {"perturb_levels", c.perturb_levels},
          {"perturb_repeats", c.perturb_repeats},
          {"seed", c.seed},
          {"output_dir", c.output_dir.string()}};
}

StudyReport run_study(const StudyConfig& cfg, std::ostream* progress) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.output_dir);
  StudyReport report;
  report.timing_log = cfg.output_dir / "timing.log";
  std::ofstream timing(report.timing_log);
  const auto log = [&](const std::string& s) {
    if (progress) *progress << s << std::endl;
  };
  const auto emit = [&](const fs::path& p) { report.files.push_back(p); };

  {
    const fs::path p = cfg.output_dir / "resolved_config.json";
    std::ofstream(p) << study_config_to_json(cfg).dump(2) << '\n';
    emit(p);
  }

  const fs::path table_path = cfg.output_dir / "table_1.csv";
  std::ofstream table(table_path);
  emit(table_path);
  table << "scenario";
  for (Metric m : cfg.metrics) table << ',' << metric_name(m) << "_auc," << metric_name(m) << "_ap";
  table << '\n';
  if (cfg.metrics.empty()) return report;

  ScoreConfig score = cfg.score;
  score.seed = derive_seed(cfg.seed, 0x5c0e);

  for (const auto& scenario : cfg.scenarios) {
    Clock clock;
    const std::uint64_t sseed = derive_seed(cfg.seed, name_hash(scenario));
    log(scenario + ": generating " + std::to_string(cfg.n_traj) + " trajectories");
    const Dataset ds = generate_dataset(scenario, cfg.scenario_configs.value(scenario, json::object()), cfg.n_traj,
                                        cfg.K, sseed, cfg.k_hat);
    const fs::path ds_path = cfg.output_dir / ("dataset_" + scenario + ".jsonl");
    write_jsonl(ds_path, ds);
    emit(ds_path);
    emit(ds_path.string() + ".provenance.json");
    timing << scenario << " generate_s " << clock.lap() << '\n';

    log(scenario + ": scoring " + std::to_string(cfg.n_traj * cfg.K) + " frames");
    const auto rows = score_dataset(ds, cfg.metrics, score, cfg.workers);
    const double score_s = clock.lap();
    timing << scenario << " score_s " << score_s << " per_frame_s " << score_s / (cfg.n_traj * cfg.K) << '\n';
    {
      const fs::path p = cfg.output_dir / ("scores_" + scenario + ".csv");
      std::ofstream out(p);
      write_scores_csv_header(out);
      for (const auto& r : rows) write_score_row(out, r);
      emit(p);
    }

    std::vector<bool> success;
    for (const auto& r : ds.records) success.push_back(r.success_label);
    table << scenario;
    for (Metric m : cfg.metrics) {
      std::vector<double> s;
      std::vector<bool> l;
      column(rows, m, s, l);
      if (m == Metric::omega_suc) {
        std::vector<ScoreRow> only;
        for (const auto& r : rows)
          if (r.metric == m) only.push_back(r);
        s = trajectory_scores(ds, only, cfg.k_bar);
        l = success;
      }
      try {
        table << ',' << format_double(auc(s, l)) << ',' << format_double(average_precision(s, l));
      } catch (const std::invalid_argument& e) {
        throw std::runtime_error(scenario + ": " + metric_name(m) + ": " + e.what());
      }
    }
    table << '\n';

    // Success-score quality against the field size.
    const bool sweep = std::find(cfg.metrics.begin(), cfg.metrics.end(), Metric::omega_suc) != cfg.metrics.end();
    if (sweep && !cfg.m_sweep.empty()) {
      Dataset head = ds;
      for (auto& r : head.records) {
        r.frames.resize(static_cast<std::size_t>(cfg.k_bar));
        r.captured_labels.resize(static_cast<std::size_t>(cfg.k_bar));
      }
      const std::vector<Metric> suc = {Metric::omega_suc};
      std::vector<std::pair<double, Summary>> auc_pts, ap_pts;
      for (std::size_t M : cfg.m_sweep) {
        log(scenario + ": M sweep, M = " + std::to_string(M));
        std::vector<double> aucs, aps;
        clock.lap();
        for (int rep = 0; rep < cfg.sweep_repeats; ++rep) {
          ScoreConfig sc = score;
          sc.M = M;
          sc.seed = derive_seed(cfg.seed, 0xf16000 + static_cast<std::uint64_t>(rep));
          const auto s = trajectory_scores(head, score_dataset(head, suc, sc, cfg.workers), cfg.k_bar);
          try {
            aucs.push_back(auc(s, success));
            aps.push_back(average_precision(s, success));
          } catch (const std::invalid_argument& e) {
            throw std::runtime_error(scenario + ": omega_suc: " + e.what());
          }
        }
        const double secs = clock.lap();
        timing << scenario << " m_sweep M " << M << " per_frame_s "
               << secs / (cfg.sweep_repeats * cfg.n_traj * cfg.k_bar) << '\n';
        auc_pts.push_back({static_cast<double>(M), summarize(aucs)});
        ap_pts.push_back({static_cast<double>(M), summarize(aps)});
      }
      const fs::path pa = cfg.output_dir / ("fig_6_" + scenario + "_omega_suc_auc.csv");
      const fs::path pp = cfg.output_dir / ("fig_6_" + scenario + "_omega_suc_ap.csv");
      write_curve(pa, auc_pts);
      write_curve(pp, ap_pts);
      emit(pa);
      emit(pp);
    }

    // Average precision under growing modelling errors.
    for (Metric m : {Metric::omega_cap, Metric::omega_force}) {
      if (std::find(cfg.metrics.begin(), cfg.metrics.end(), m) == cfg.metrics.end()) continue;
      const std::vector<Metric> one = {m};
      std::vector<double> base_s;
      std::vector<bool> labels;
      column(rows, m, base_s, labels);
      double base_ap = 0.0;
      try {
        base_ap = average_precision(base_s, labels);
      } catch (const std::invalid_argument& e) {
        throw std::runtime_error(scenario + ": " + metric_name(m) + ": " + e.what());
      }
      for (PerturbKind kind : cfg.perturbations) {
        if (!affects(m, kind)) continue;
        log(scenario + ": " + metric_name(m) + " under " + perturb_name(kind) + " perturbation");
        const double e_max = cfg.e_max.value(perturb_name(kind), default_e_max(kind));
        std::vector<std::pair<double, Summary>> pts = {{0.0, {base_ap, base_ap, base_ap}}};
        for (int level = 1; level < cfg.perturb_levels; ++level) {
          const double x = static_cast<double>(level) / (cfg.perturb_levels - 1);
          std::vector<double> aps;
          for (int rep = 0; rep < cfg.perturb_repeats; ++rep) {
            const std::uint64_t pseed = derive_seed(
                derive_seed(sseed, 0x7e27 + static_cast<std::uint64_t>(kind)), static_cast<std::uint64_t>(level * 1000 + rep));
            const Dataset noisy = perturb_dataset(ds, {kind, x * e_max, pseed});
            std::vector<double> s;
            std::vector<bool> l;
            column(score_dataset(noisy, one, score, cfg.workers), m, s, l);
            aps.push_back(average_precision(s, l));
          }
          pts.push_back({x, summarize(aps)});
        }
        const fs::path p =
            cfg.output_dir / ("fig_7_" + scenario + "_" + metric_name(m) + "_" + perturb_name(kind) + ".csv");
        write_curve(p, pts);
        emit(p);
      }
    }
    timing << scenario << " curves_s " << clock.lap() << '\n';
  }
  return report;
}

}  // namespace escapekit::eval
