#pragma once

// Proxy data annotation: a weighted forward training loop, a reverse loop
// that back-propagates downstream-gradient target vectors along the
// trajectory, and per-sample learnability/quality scores built from them.

#include "delt/corpus.hpp"
#include "delt/tinylm.hpp"

#include <json.hpp>

#include <cstdint>
#include <span>
#include <vector>

namespace delt {

/// Guard for every norm used as a denominator.
inline constexpr double norm_epsilon = 1e-12;

struct AnnotationConfig {
    int steps = 12;                 // T
    double lm_learning_rate = 0.5;  // eta
    double score_step = 1e-4;       // alpha
    int outer_iters = 1;
    std::uint64_t seed = 0;         // model initialization
    ModelConfig model;

    void validate() const;
};

struct Trajectory {
    std::vector<ModelParams> checkpoints;  // theta_0 .. theta_T
    double eta = 0.0;

    int steps() const { return static_cast<int>(checkpoints.size()) - 1; }
};

struct TargetVectors {
    std::vector<std::vector<double>> lambdas;  // lambdas[t - 1] holds lambda_t, t = 1..T

    const std::vector<double>& at(int t) const { return lambdas.at(static_cast<std::size_t>(t - 1)); }
};

/// Per-(sample, step) quantities every score is assembled from.
/// grad_norms[n][t - 1] = |grad l(x_n, theta_t)| for t = 1..T;
/// target_dots[n][t - 1] = lambda_{t+1} . grad l(x_n, theta_t) for t = 1..T-1;
/// target_norms[t - 1] = |lambda_{t+1}| (the reliability of step t).
struct StepStatistics {
    std::vector<std::vector<double>> grad_norms;
    std::vector<std::vector<double>> target_dots;
    std::vector<double> target_norms;

    std::size_t samples() const { return grad_norms.size(); }
    int steps() const { return grad_norms.empty() ? 0 : static_cast<int>(grad_norms.front().size()); }
};

/// One summand of the combined score and its three factors.
struct LqsTerm {
    double summand = 0.0;
    double reliability = 0.0;
    double quality = 0.0;
    double learnability = 0.0;
};

// Objective-agnostic recursions; the model-level functions below wrap these.
std::vector<std::vector<double>> forward_recursion(std::span<const double> theta0, int steps, double eta,
                                                   const GradientFn& train_grad);
std::vector<std::vector<double>> reverse_recursion(const std::vector<std::vector<double>>& thetas, double eta,
                                                   const GradientFn& downstream_grad, const GradientFn& train_grad);

Trajectory forward_trajectory(const ModelParams& theta0, const Corpus& proxy, const ScoreVector& gamma, int steps,
                              double eta);
TargetVectors reverse_target_vectors(const Trajectory& traj, const Corpus& proxy, const ScoreVector& gamma,
                                     const Corpus& eval);

/// Targets may be null, in which case only gradient norms are collected.
StepStatistics step_statistics(const Trajectory& traj, const TargetVectors* targets, const Corpus& proxy);

std::vector<double> learnability_from(const StepStatistics& stats);
std::vector<double> quality_from(const StepStatistics& stats);
std::vector<double> lqs_from(const StepStatistics& stats);
LqsTerm lqs_term(const StepStatistics& stats, std::size_t n, int t);

ScoreVector learnability_scores(const Trajectory& traj, const Corpus& proxy);
ScoreVector quality_scores(const Trajectory& traj, const TargetVectors& targets, const Corpus& proxy);
ScoreVector lqs_scores(const Trajectory& traj, const TargetVectors& targets, const Corpus& proxy);
/// Quality-only baseline; identical to quality_scores.
ScoreVector pds_scores(const Trajectory& traj, const TargetVectors& targets, const Corpus& proxy);

/// Euclidean projection onto the probability simplex (sort and threshold).
std::vector<double> project_simplex(std::span<const double> v);

struct AnnotationResult {
    ScoreVector gamma_star;
    ScoreVector raw_scores;   // combined score sums of the last outer iteration
    ScoreVector learnability;
    ScoreVector quality;
    std::vector<double> reliability;  // |lambda_{t+1}| for t = 1..T-1
    StepStatistics stats;
    ModelParams final_params;  // theta_T of the last forward loop
    AnnotationConfig config;
};

AnnotationResult annotate_proxy(const Corpus& proxy, const Corpus& eval, const AnnotationConfig& cfg);

nlohmann::json to_json(const AnnotationConfig& cfg);
AnnotationConfig annotation_config_from_json(const nlohmann::json& j);
nlohmann::json annotation_json(const AnnotationResult& result);

}  // namespace delt
