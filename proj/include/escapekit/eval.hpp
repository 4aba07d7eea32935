#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "escapekit/metrics.hpp"
#include "escapekit/scenarios.hpp"
#include "json.hpp"

namespace escapekit::eval {

using nlohmann::json;
using scenarios::ScenarioSpec;
using scenarios::SystemState;

struct Frame {
  int k = 0;  // simulator step index within the trajectory
  SystemState z;
  std::vector<dynamics::ContactPoint> contacts;  // object to end-effector contacts of the step ending at z
  double min_distance = 0.0;                     // object to end-effector clearance, m (infinite without one)
  double mu = 0.0;                               // object to end-effector friction coefficient
  double object_mu = 0.0;                        // object friction used to rebuild the planning model
};

struct TrajectoryRecord {
  std::string id;
  std::string scenario;
  json config;  // resolved scenario config; make_scenario(scenario, config) rebuilds the model
  std::uint64_t seed = 0;
  std::vector<Frame> frames;
  bool success_label = false;
  std::vector<bool> captured_labels;
};

struct Dataset {
  std::vector<TrajectoryRecord> records;
  json generation_config;  // scenario, base config, n_traj, K, k_hat, seed
};

inline constexpr int kDefaultKHat = 3;

Dataset generate_dataset(const std::string& scenario, const json& base_config, int n_traj, int K,
                         std::uint64_t seed, int k_hat = kDefaultKHat);

/// Called with (step index, world state) for every simulated state, starting at step 0.
using StepObserver = std::function<void(int, const dynamics::WorldState&)>;

/// Trajectory `index` of the dataset generate_dataset(scenario, base_config, ..., seed) would build.
TrajectoryRecord simulate_trajectory(const std::string& scenario, const json& base_config, std::size_t index,
                                     int K, std::uint64_t seed, int k_hat = kDefaultKHat,
                                     const StepObserver& observer = {});
/// Regenerates from `generation_config`.
Dataset regenerate(const json& generation_config);

/// Frame k is captured iff every frame k..min(k + k_hat, K - 1) lies in its own capture set.
std::vector<bool> label_captured(const TrajectoryRecord& record, const ScenarioSpec& spec, int k_hat);
std::vector<bool> label_captured(const std::vector<bool>& membership, int k_hat);

json record_to_json(const TrajectoryRecord& r);
TrajectoryRecord record_from_json(const json& j);
void write_jsonl(std::ostream& out, const Dataset& d);
void write_jsonl(const std::filesystem::path& path, const Dataset& d);
/// Throws std::runtime_error naming the 1-based line of a malformed record.
Dataset read_jsonl(std::istream& in);
Dataset read_jsonl(const std::filesystem::path& path);

/// Mann-Whitney AUC, ties counted one half.
double auc(std::span<const double> scores, const std::vector<bool>& labels);
/// Descending score order, ties kept in original order.
double average_precision(std::span<const double> scores, const std::vector<bool>& labels);

enum class PerturbKind { friction, velocity, position, force };
const char* perturb_name(PerturbKind k);
PerturbKind perturb_from_name(const std::string& name);
/// Maximal thresholds at which the kinds are of comparable intensity.
double default_e_max(PerturbKind k);

struct PerturbationSpec {
  PerturbKind kind = PerturbKind::friction;
  double e_max = 0.0;  // friction: absolute mu; velocity: m/s (2x in rad/s); position: m; force: relative
  std::uint64_t seed = 0;
};

Dataset perturb_dataset(const Dataset& d, const PerturbationSpec& p);

enum class Metric { omega_cap, omega_suc, omega_esc_est, omega_esc_rrt, omega_force };
const char* metric_name(Metric m);
Metric metric_from_name(const std::string& name);
const std::vector<Metric>& all_metrics();

struct ScoreConfig {
  double lambda = 1.0;
  std::size_t M = 100;
  int escape_rounds = 10;
  int escape_budget = 2000;
  metrics::ForceWeights force_weights;
  double d0 = 0.05;
  std::uint64_t seed = 0;
  planner::PlannerConfig planner;
};

struct ScoreRow {
  std::string scenario;
  std::string traj_id;
  int frame = 0;  // index among the recorded frames
  Metric metric = Metric::omega_cap;
  double value = 0.0;
  bool label = false;  // captured label; success label for omega_suc
};

/// Scores every (trajectory, frame) work item. Row order and values do not depend on the
/// worker count. `workers` <= 0 uses all threads; 1 runs the serial kernel.
std::vector<ScoreRow> score_dataset(const Dataset& d, std::span<const Metric> metrics, const ScoreConfig& cfg,
                                    int workers = 0);
std::vector<ScoreRow> score_dataset_serial(const Dataset& d, std::span<const Metric> metrics,
                                           const ScoreConfig& cfg);
/// Scores only the listed records; seeds still follow each record's position in `d`.
std::vector<ScoreRow> score_records(const Dataset& d, std::span<const std::size_t> records,
                                    std::span<const Metric> metrics, const ScoreConfig& cfg, int workers = 0);

/// Scores one frame of one record; `spec` is the record's model.
std::vector<double> score_frame(const ScenarioSpec& spec, const Frame& f, std::span<const Metric> metrics,
                                const ScoreConfig& cfg, std::uint64_t seed);

std::uint64_t frame_seed(std::uint64_t seed, std::size_t record, std::size_t frame);

std::string format_double(double v);
void write_scores_csv_header(std::ostream& out);
void write_score_row(std::ostream& out, const ScoreRow& r);

struct StudyConfig {
  std::vector<std::string> scenarios = {"pushing"};
  json scenario_configs = json::object();  // per-scenario base config
  int n_traj = 50;
  int K = 10;
  int k_hat = kDefaultKHat;
  int k_bar = 5;
  std::vector<Metric> metrics = all_metrics();
  ScoreConfig score;
  std::vector<std::size_t> m_sweep = {10, 30, 100, 1000};
  int sweep_repeats = 5;
  std::vector<PerturbKind> perturbations = {PerturbKind::friction, PerturbKind::velocity,
                                            PerturbKind::position, PerturbKind::force};
  json e_max = json::object();  // kind name -> maximal threshold override
  int perturb_levels = 5;       // scaled thresholds 0, 1/(L-1), ..., 1
  int perturb_repeats = 3;
  std::uint64_t seed = 0;
  int workers = 0;
  std::filesystem::path output_dir = "study_out";
};

StudyConfig study_config_from_json(const json& j);
json study_config_to_json(const StudyConfig& c);

struct StudyReport {
  std::vector<std::filesystem::path> files;  // deterministic artifacts
  std::filesystem::path timing_log;          // wall clock; not part of the deterministic set
};

/// Table I analog (table_1.csv), M sweep (fig_6_*.csv), perturbation curves (fig_7_*.csv),
/// per-row scores and the resolved config.
StudyReport run_study(const StudyConfig& cfg, std::ostream* progress = nullptr);

}  // namespace escapekit::eval
