#pragma once

#include "delt/corpus.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

namespace delt {

/// Add-k smoothed byte n-gram model used as a perplexity (difficulty) scorer.
struct NgramModel {
    struct ContextCounts {
        std::uint64_t total = 0;
        std::map<TokenId, std::uint64_t> next;

        bool operator==(const ContextCounts&) const = default;
    };

    int order = 3;
    double smoothing = 0.1;
    int vocab_size = Tokenizer::vocab_size;
    std::map<std::vector<TokenId>, ContextCounts> counts;

    std::uint64_t count(const std::vector<TokenId>& context, TokenId next) const;
    /// (count + k) / (total + k * V)
    double probability(const std::vector<TokenId>& context, TokenId next) const;
    /// The n-1 tokens preceding `pos`, left-padded with BOS.
    std::vector<TokenId> context_at(std::span<const TokenId> tokens, std::size_t pos) const;

    bool operator==(const NgramModel&) const = default;
};

NgramModel fit_ngram(const Corpus& corpus, int order = 3, double smoothing = 0.1);

/// exp(mean negative log-probability over positions 1..|tokens|-1).
double perplexity(const NgramModel& model, std::span<const TokenId> tokens);

/// score = -perplexity, so easier samples score higher.
ScoreVector kenlm_score(const Corpus& corpus, const NgramModel& model);

void save_ngram(const NgramModel& model, const std::filesystem::path& path);
NgramModel load_ngram(const std::filesystem::path& path);

}  // namespace delt
