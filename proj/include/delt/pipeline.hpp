#pragma once

// Data selection and ordering driven by a shared score vector. Larger
// scores rank higher; ties always fall back to the original index.

#include "delt/corpus.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace delt {

struct SelectionConfig {
    double ratio = 1.0;  // r in (0, 1]
};

enum class OrderingStrategy { shuffle, sort_ascending, sort_descending, fold };

/// Which residue class of sorted positions leads each fold pass.
/// residue_zero: positions L, 2L, ... come first (the literal definition);
/// first_position: passes start at positions 1, 2, ..., L.
enum class FoldStart { residue_zero, first_position };

struct OrderingConfig {
    OrderingStrategy strategy = OrderingStrategy::shuffle;
    int layers = 3;  // L, fold only
    FoldStart fold_start = FoldStart::residue_zero;
    std::optional<std::uint64_t> seed;  // shuffle only

    std::string label() const;
};

std::string to_string(OrderingStrategy s);
OrderingStrategy parse_strategy(const std::string& name);

/// K = max(1, floor(r * |D|)).
std::size_t selection_size(std::size_t corpus_size, double ratio);

/// Index-level kernels, also used by the brute-force tests.
std::vector<std::size_t> topk_indices(std::span<const double> scores, std::size_t k);
std::vector<std::size_t> sort_permutation(std::span<const double> scores, bool ascending);
std::vector<std::size_t> fold_permutation(std::span<const double> scores, int layers,
                                          FoldStart start = FoldStart::residue_zero);
std::vector<std::size_t> shuffle_permutation(std::size_t n, std::uint64_t seed);

Corpus select_topk(const Corpus& corpus, const ScoreVector& scores, double ratio);
Corpus order_shuffle(const Corpus& corpus, std::uint64_t seed);
Corpus order_sort(const Corpus& corpus, const ScoreVector& scores, bool ascending);
Corpus order_fold(const Corpus& corpus, const ScoreVector& scores, int layers,
                  FoldStart start = FoldStart::residue_zero);
Corpus apply_ordering(const Corpus& corpus, const ScoreVector& scores, const OrderingConfig& ord,
                      std::uint64_t fallback_seed = 0);

/// Selection (if any) then ordering, both under the same scores.
Corpus compose(const Corpus& corpus, const ScoreVector& scores, const std::optional<SelectionConfig>& sel,
               const OrderingConfig& ord);

nlohmann::json to_json(const OrderingConfig& ord);
OrderingConfig ordering_config_from_json(const nlohmann::json& j);

}  // namespace delt
