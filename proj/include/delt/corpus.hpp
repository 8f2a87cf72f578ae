#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace delt {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

/// Byte-level tokenizer: ids 0..255 are raw bytes, 256 is begin-of-sequence.
struct Tokenizer {
    static constexpr TokenId bos = 256;
    static constexpr int vocab_size = 257;

    static TokenSeq tokenize(std::string_view text);
    /// Inverse of tokenize; a leading BOS is dropped.
    static std::string detokenize(std::span<const TokenId> tokens);
};

struct Sample {
    std::string id;
    std::string text;
    TokenSeq tokens;
};

/// Ordered, non-empty collection of samples with unique ids. The order is
/// the training order.
class Corpus {
public:
    Corpus(std::vector<Sample> samples, std::string provenance);

    std::size_t size() const noexcept { return samples_.size(); }
    const Sample& operator[](std::size_t i) const { return samples_[i]; }
    const std::vector<Sample>& samples() const noexcept { return samples_; }
    const std::string& provenance() const noexcept { return provenance_; }

    auto begin() const noexcept { return samples_.begin(); }
    auto end() const noexcept { return samples_.end(); }

    /// Samples picked by index, in the given index order.
    Corpus reordered(std::span<const std::size_t> indices, std::string_view step) const;

private:
    std::vector<Sample> samples_;
    std::string provenance_;
};

/// One real score per sample id.
struct ScoreVector {
    std::vector<std::pair<std::string, double>> entries;

    std::size_t size() const noexcept { return entries.size(); }

    /// Scores in corpus order; throws score-coverage unless the ids are a
    /// bijection with the corpus.
    std::vector<double> aligned(const Corpus& corpus) const;

    static ScoreVector from_values(const Corpus& corpus, std::span<const double> values);
};

struct LoadOptions {
    std::size_t max_tokens = 512;  // including BOS
};

Corpus load_jsonl(const std::filesystem::path& path, const LoadOptions& options = {});
Corpus parse_jsonl(std::string_view content, std::string source_name, const LoadOptions& options = {});

/// Writes {"id","text"} lines; with positions, adds a 0-based "position" field.
void write_corpus_jsonl(const Corpus& corpus, const std::filesystem::path& path, bool with_positions = false);

void write_scores(const Corpus& corpus, const ScoreVector& scores, const std::filesystem::path& path);
ScoreVector read_scores(const std::filesystem::path& path);

std::vector<const TokenSeq*> token_views(const Corpus& corpus);

}  // namespace delt
