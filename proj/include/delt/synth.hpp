#pragma once

// Desk-scale synthetic corpora: English-like clean text plus injected noise
// samples of random printable bytes.

#include "delt/corpus.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace delt {

struct SynthConfig {
    std::size_t samples = 200;
    double noise_fraction = 0.2;
    std::size_t eval_samples = 24;
    std::size_t min_bytes = 48;
    std::size_t max_bytes = 96;
    std::uint64_t seed = 0;
};

struct SynthCorpus {
    Corpus train;
    Corpus eval;
    std::vector<bool> is_noise;  // aligned with train
};

SynthCorpus make_synthetic(const SynthConfig& cfg);

std::string clean_text(std::uint64_t seed, std::size_t min_bytes, std::size_t max_bytes);
std::string noise_text(std::uint64_t seed, std::size_t min_bytes, std::size_t max_bytes);

/// Corpus JSONL with an extra boolean "noise" field per line.
void write_synthetic(const SynthCorpus& synth, const std::filesystem::path& train_path,
                     const std::filesystem::path& eval_path);

}  // namespace delt
