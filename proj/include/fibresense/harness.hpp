#pragma once

#include "fibresense/config.hpp"
#include "fibresense/ladder.hpp"
#include "fibresense/metrics.hpp"
#include "fibresense/mlp.hpp"
#include "fibresense/signal_chain.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fibresense::harness {

/// Staircase stretch protocol: plateaus climb from `step` to `max_strain` in
/// increments of `step` and back down, connected by constant-rate ramps, with
/// rest padding at both ends. Each combo block runs the full staircase on the
/// listed segments simultaneously; one trial concatenates every combo block.
struct StaircaseSpec {
    double step = 0.10;
    double max_strain = 0.40;
    double ramp_rate = 0.01; // strain fraction per second
    double hold_s = 5.0;
    double rest_pad_s = 5.0;
    int repetitions = 6;     // trials; targets repeat, noise differs
    std::vector<std::vector<std::size_t>> combos;

    void validate(std::size_t n_segments) const;
    /// Singles followed by adjacent pairs.
    static std::vector<std::vector<std::size_t>> default_combos(std::size_t n_segments);
    static StaircaseSpec from_config(const config::ConfigFile& cfg, const LadderModel& model);
};

/// Per-segment strain trajectories sampled on the demodulated frame grid.
struct StrainProfile {
    double rate = 0; // Hz
    std::vector<std::vector<double>> eps; // [segment][frame]
    [[nodiscard]] std::size_t frames() const { return eps.empty() ? 0 : eps.front().size(); }
};

/// One staircase trial (all combo blocks) sampled at `rate`.
StrainProfile staircase_profile(const StaircaseSpec& spec, std::size_t n_segments, double rate);

/// One articulated joint routing strain into a single sensitive segment.
struct JointSpec {
    std::string name;
    double range_deg = 90;
    double strain_span = 0.2; // strain swept across the full angular range
    std::size_t segment = 0;  // sensitive segment index
};

/// Garment motion protocol: each set moves one joint at a time through
/// raised-cosine reps of randomized duration and peak, on top of donning
/// pre-strain, low-frequency postural sway, and small mechanical crosstalk
/// into the segments adjacent to the active one.
struct JointScenarioSpec {
    std::vector<JointSpec> joints;
    int reps_per_joint = 10;
    int sets = 10;                 // trials; every set is independently randomized
    double rep_duration_min_s = 2.5;
    double rep_duration_max_s = 3.5;
    double rep_gap_s = 0.7;
    double rep_peak_min = 0.6;     // fraction of the joint range
    double rep_peak_max = 1.0;
    double pre_strain = 0.10;
    double crosstalk = 0.02;       // strain coupled into adjacent segments at full deflection
    double sway_amplitude_deg = 2.0;
    double rest_angle_frac = 0.10; // relaxed posture as a fraction of range; keeps
                                   // sway clear of the 0 deg stop so idle joints
                                   // keep varying instead of pinning to a constant
    double rest_pad_s = 5.0;
    std::uint64_t seed = 0;

    void validate(std::size_t n_segments) const;
    static JointScenarioSpec from_config(const config::ConfigFile& cfg, const LadderModel& model);
};

/// One set: joint angles and the strains they induce, on the frame grid.
struct JointProfile {
    double rate = 0;
    std::vector<std::vector<double>> angles_deg; // [joint][frame]
    StrainProfile strains;
};

JointProfile joint_scenario_trial(const JointScenarioSpec& spec, std::size_t n_segments,
                                  double rate, std::uint64_t trial_seed);

/// Demodulated frames with ground-truth targets and per-frame trial tags.
struct Dataset {
    enum class Kind { Strain, Joint };

    Kind kind = Kind::Strain;
    double frame_rate = 0;
    std::size_t tones = 0;
    std::vector<IQFrame> frames;
    std::vector<std::vector<double>> targets; // [output][frame]
    std::vector<std::string> target_names;
    std::vector<int> trial;                   // 1-based tag per frame

    /// Feature matrix (i1, q1, i2, q2, ... per column sample).
    [[nodiscard]] Eigen::MatrixXd inputs() const;
    [[nodiscard]] Eigen::MatrixXd target_matrix() const;
    [[nodiscard]] std::vector<int> distinct_trials() const;
};

/// Frame synthesis route. Analytic produces each frame in closed form (the
/// block mean of a coherent mixer product reduces exactly to half the in-phase
/// and quadrature impedance components, plus Gaussian noise with the block-
/// averaged variance). Full runs the sample-level chain; Auto picks Full only
/// when quantization is enabled, which has no closed form.
enum class ChainMode { Auto, Analytic, Full };

Dataset synthesize_staircase(const LadderModel& model, const ExcitationConfig& exc,
                             const NoiseConfig& noise, const StaircaseSpec& spec,
                             ChainMode mode = ChainMode::Auto);

Dataset synthesize_joint(const LadderModel& model, const ExcitationConfig& exc,
                         const NoiseConfig& noise, const JointScenarioSpec& spec,
                         ChainMode mode = ChainMode::Auto);

void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

/// Strain regression study on a staircase dataset: train on the leading trials,
/// validate and test on the last two, median-filter the test predictions, and
/// cross-check with the model-based least-squares route on the same test split.
struct StrainRunConfig {
    mlp::TrainConfig train;
    std::vector<mlp::LayerSpec> hidden = {{16, mlp::Activation::Tanh, 0, 0},
                                          {32, mlp::Activation::Relu, 0, 1e-5}};
    double median_window_s = 2.0;
    double target_range = 0.40; // strain fraction for normalized errors
    bool run_lsq = true;
};

struct TargetReport {
    std::string name;
    metrics::Metrics m;
    double spearman = 0;
};

struct StrainRunReport {
    std::vector<TargetReport> per_segment;      // regression route
    metrics::Metrics aggregate;
    std::vector<TargetReport> lsq_per_segment;  // model-inversion route
    metrics::Metrics lsq_aggregate;
    std::size_t lsq_unconverged = 0;
    mlp::TrainHistory history;
    mlp::MLPModel model;
    Eigen::MatrixXd predictions;                // [output][test frame], filtered
    Eigen::MatrixXd lsq_predictions;
    Eigen::MatrixXd references;
    std::vector<double> test_time;
    std::vector<int> test_trial;
};

StrainRunReport run_strain_validation(const Dataset& ds, const LadderModel& model,
                                      const ExcitationConfig& exc, const StrainRunConfig& cfg);

/// Apply an already-trained model to the dataset's held-out test trial (the
/// highest trial tag) with the same filtering and metrics as the training run;
/// history is left empty. Used to re-score saved artifacts.
StrainRunReport evaluate_strain_model(const Dataset& ds, const mlp::MLPModel& trained,
                                      const LadderModel& model, const ExcitationConfig& exc,
                                      const StrainRunConfig& cfg);

/// Joint angle study: low-pass the features, smooth the reference angles, and
/// run leave-one-set-out cross-validation with a per-fold 80/20 train/val split.
struct JointRunConfig {
    mlp::TrainConfig train;
    std::vector<mlp::LayerSpec> hidden = {{16, mlp::Activation::Relu, 0, 0},
                                          {32, mlp::Activation::Relu, 0.04, 0.15}};
    double butter_cutoff_hz = 2.0;
    int butter_order = 4;
    double savgol_window_s = 2.0;
    int savgol_order = 4;
    std::vector<double> ranges_deg; // per joint, for normalized errors
    double train_fraction = 0.8;
};

struct FoldReport {
    int test_trial = 0;
    std::vector<TargetReport> per_joint;
    mlp::TrainHistory history;
};

struct JointRunReport {
    std::vector<FoldReport> folds;
    std::vector<TargetReport> per_joint; // pooled over every fold's test set
    metrics::Metrics aggregate;
    mlp::MLPModel model;                 // model from the final fold
    Eigen::MatrixXd predictions;         // pooled, ordered by fold
    Eigen::MatrixXd references;
    std::vector<double> test_time;
    std::vector<int> test_trial;
};

JointRunReport run_joint_scenario(const Dataset& ds, const JointRunConfig& cfg);

struct JointEvalReport {
    int test_trial_tag = 0;
    std::vector<TargetReport> per_joint;
    metrics::Metrics aggregate;
    Eigen::MatrixXd predictions;
    Eigen::MatrixXd references;
    std::vector<double> test_time;
    std::vector<int> test_trial;
};

/// Score a trained model on one trial of a joint dataset (tag < 0 picks the
/// highest tag), with the same per-trial filtering as the cross-validation run.
JointEvalReport evaluate_joint_model(const Dataset& ds, const mlp::MLPModel& trained,
                                     const JointRunConfig& cfg, int tag = -1);

} // namespace fibresense::harness
