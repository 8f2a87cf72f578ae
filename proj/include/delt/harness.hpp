#pragma once

#include "delt/annotate.hpp"
#include "delt/corpus.hpp"
#include "delt/pipeline.hpp"
#include "delt/regressor.hpp"
#include "delt/tinylm.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace delt {

struct TrainConfig {
    int epochs = 1;
    int batch_size = 4;
    double learning_rate = 0.5;
    std::uint64_t seed = 0;
    ModelConfig model;

    void validate() const;
};

struct TrainResult {
    ModelParams params;
    std::vector<double> batch_losses;
};

/// Sequential minibatch SGD over the corpus in its given order; no
/// reshuffling between batches or epochs.
TrainResult train_lm(const Corpus& ordered, const TrainConfig& cfg);

/// Mean per-sample cross-entropy on the held-out corpus.
double evaluate(const ModelParams& params, const Corpus& eval);

enum class ScorerKind { kenlm, pds, lqs, external };

std::string to_string(ScorerKind kind);
ScorerKind parse_scorer(const std::string& name);

struct ScoringConfig {
    ScorerKind kind = ScorerKind::lqs;
    std::string scores_path;      // external scorer
    int ngram_order = 3;
    double ngram_smoothing = 0.1;
    AnnotationConfig annotation;
    std::size_t proxy_size = 0;   // 0: annotate the whole corpus directly
    RegressorConfig regressor;
};

/// Scores a corpus. Gradient-based scorers annotate the corpus (or a
/// seeded uniform proxy subset, generalized by the regressor) against the
/// eval set; `seed` drives model init and proxy sampling.
ScoreVector score_corpus(const Corpus& corpus, const Corpus* eval, const ScoringConfig& cfg, std::uint64_t seed);

struct ExperimentSpec {
    std::string corpus_path;
    std::string eval_path;
    ScoringConfig scoring;
    std::optional<double> selection_ratio;
    std::vector<OrderingConfig> orderings;
    std::vector<std::uint64_t> seeds;
    TrainConfig train;

    void validate() const;
};

struct ExperimentRow {
    std::string ordering;
    std::uint64_t seed = 0;
    double final_loss = 0.0;
    std::vector<double> curve;
    double wall_seconds = 0.0;
    std::string error;  // empty on success

    bool ok() const { return error.empty(); }
};

struct OrderingSummary {
    std::string ordering;
    std::size_t runs = 0;
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation; 0 for a single run
};

struct ExperimentReport {
    std::vector<ExperimentRow> rows;
    std::vector<OrderingSummary> summaries;
    /// wins[a][b]: seeds where ordering a ended with strictly lower loss than b.
    std::map<std::string, std::map<std::string, int>> wins;
};

ExperimentReport run_experiment(const ExperimentSpec& spec);
ExperimentReport run_experiment(const ExperimentSpec& spec, const Corpus& corpus, const Corpus& eval);

/// Recomputes summaries and win counts from the rows.
void summarize(ExperimentReport& report);

/// One-sided sign test: P(X >= wins) for X ~ Binomial(wins + losses, 1/2).
double sign_test_p(int wins, int losses);

/// Writes rows.csv, curves.csv and summary.txt into `dir`
/// (timing.csv as well when requested).
void write_report(const ExperimentReport& report, const std::filesystem::path& dir, bool with_timing = false);

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentSpec& spec);
ExperimentSpec experiment_spec_from_json(const nlohmann::json& j);
/// Hex FNV-1a digest of the canonical spec JSON; names run directories.
std::string spec_hash(const ExperimentSpec& spec);

}  // namespace delt
