#pragma once

#include "delt/corpus.hpp"
#include "delt/tinylm.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <span>
#include <vector>

namespace delt {

enum class FeatureKind {
    embedding,         // mean of token embedding rows
    embedding_hidden,  // that, followed by the mean hidden-layer activation
};

std::string to_string(FeatureKind kind);
FeatureKind parse_feature_kind(const std::string& name);

/// Frozen tiny-LM parameters used as the feature extractor.
struct FeatureMap {
    FeatureKind kind = FeatureKind::embedding_hidden;
    ModelParams model;

    std::size_t dim() const;

    static FeatureMap from_params(const ModelParams& params, FeatureKind kind = FeatureKind::embedding_hidden);
};

/// Mean-pooled features over the tokens after BOS. The first embed_dim
/// entries are always the mean embedding row.
std::vector<double> extract_features(const Sample& sample, const FeatureMap& phi);

struct RegressorConfig {
    int epochs = 300;
    double learning_rate = 0.5;  // relative to 1/L, L the Lipschitz constant of the MSE gradient
    std::uint64_t seed = 0;        // head initialization
    std::uint64_t split_seed = 0;  // train/validation split
};

struct RegressorModel {
    FeatureMap phi;
    std::vector<double> w;
    double b = 0.0;

    // training metadata
    std::optional<double> best_validation_spearman;
    int best_epoch = -1;
    std::vector<double> train_loss_history;  // MSE before each epoch's update, plus the final value
    RegressorConfig config;
    std::size_t train_size = 0;
    std::size_t validation_size = 0;
};

/// Stratified 90/10 split: samples sorted by score are cut into blocks of
/// ten and one seeded pick per block goes to validation.
std::vector<bool> stratified_validation_mask(std::span<const double> scores, std::uint64_t split_seed);

RegressorModel train_regressor(const Corpus& proxy, const ScoreVector& gamma_star, const FeatureMap& phi,
                               const RegressorConfig& cfg = {});

ScoreVector predict_scores(const RegressorModel& model, const Corpus& corpus);

/// Spearman rank correlation with average ranks on ties; nullopt when either
/// argument has zero rank variance.
std::optional<double> spearman(std::span<const double> a, std::span<const double> b);
std::vector<double> average_ranks(std::span<const double> values);

nlohmann::json regressor_json(const RegressorModel& model);
RegressorModel regressor_from_json(const nlohmann::json& j);

}  // namespace delt
