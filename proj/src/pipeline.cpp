#include "delt/pipeline.hpp"

#include "delt/error.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>
#include <unordered_map>

namespace delt {

std::string to_string(OrderingStrategy s)
{
    switch (s) {
    case OrderingStrategy::shuffle: return "shuffle";
    case OrderingStrategy::sort_ascending: return "sort_asc";
    case OrderingStrategy::sort_descending: return "sort_desc";
    case OrderingStrategy::fold: return "fold";
    }
    return "unknown";
}

OrderingStrategy parse_strategy(const std::string& name)
{
    if (name == "shuffle")
        return OrderingStrategy::shuffle;
    if (name == "sort_asc" || name == "sort_ascending")
        return OrderingStrategy::sort_ascending;
    if (name == "sort_desc" || name == "sort_descending")
        return OrderingStrategy::sort_descending;
    if (name == "fold")
        return OrderingStrategy::fold;
    fail(ErrorKind::domain, "unknown ordering strategy '" + name + "'");
}

std::string OrderingConfig::label() const
{
    std::string out = to_string(strategy);
    if (strategy == OrderingStrategy::fold) {
        out += "_L" + std::to_string(layers);
        if (fold_start == FoldStart::first_position)
            out += "_offset";
    }
    if (strategy == OrderingStrategy::shuffle && seed)
        out += "_s" + std::to_string(*seed);
    return out;
}

std::size_t selection_size(std::size_t corpus_size, double ratio)
{
    if (!(ratio > 0.0 && ratio <= 1.0))
        fail(ErrorKind::domain, "selection ratio must lie in (0, 1]");
    const auto k = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(corpus_size)));
    return std::max<std::size_t>(k, 1);
}

std::vector<std::size_t> topk_indices(std::span<const double> scores, std::size_t k)
{
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    idx.resize(std::min(k, idx.size()));
    std::sort(idx.begin(), idx.end());
    return idx;
}

std::vector<std::size_t> sort_permutation(std::span<const double> scores, bool ascending)
{
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (ascending)
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    else
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return idx;
}

std::vector<std::size_t> fold_permutation(std::span<const double> scores, int layers, FoldStart start)
{
    if (layers < 1)
        fail(ErrorKind::domain, "fold layers must be >= 1");
    const auto sorted = sort_permutation(scores, true);
    const auto n = sorted.size();
    const auto big_l = static_cast<std::size_t>(layers);
    std::vector<std::size_t> out;
    out.reserve(n);
    for (std::size_t pass = 0; pass < big_l; ++pass) {
        // 1-based sorted positions j with j mod L == residue
        const std::size_t residue = start == FoldStart::residue_zero ? pass : (pass + 1) % big_l;
        const std::size_t first = residue == 0 ? big_l : residue;
        for (std::size_t j = first; j <= n; j += big_l)
            out.push_back(sorted[j - 1]);
    }
    return out;
}

std::vector<std::size_t> shuffle_permutation(std::size_t n, std::uint64_t seed)
{
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    // Fisher-Yates with an explicit draw so the order does not depend on the
    // standard library's shuffle implementation.
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(idx[i - 1], idx[pick(rng)]);
    }
    return idx;
}

Corpus select_topk(const Corpus& corpus, const ScoreVector& scores, double ratio)
{
    const auto values = scores.aligned(corpus);
    const auto floor_k = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(corpus.size())));
    const auto k = selection_size(corpus.size(), ratio);
    if (floor_k == 0)
        std::clog << "warning: selection ratio " << ratio << " keeps no samples of " << corpus.size()
                  << "; keeping 1\n";
    const auto idx = topk_indices(values, k);
    return corpus.reordered(idx, "select_topk r=" + std::to_string(ratio) + " K=" + std::to_string(k));
}

Corpus order_shuffle(const Corpus& corpus, std::uint64_t seed)
{
    return corpus.reordered(shuffle_permutation(corpus.size(), seed), "shuffle seed=" + std::to_string(seed));
}

Corpus order_sort(const Corpus& corpus, const ScoreVector& scores, bool ascending)
{
    return corpus.reordered(sort_permutation(scores.aligned(corpus), ascending),
                            ascending ? "sort ascending" : "sort descending");
}

Corpus order_fold(const Corpus& corpus, const ScoreVector& scores, int layers, FoldStart start)
{
    return corpus.reordered(fold_permutation(scores.aligned(corpus), layers, start),
                            "fold L=" + std::to_string(layers));
}

Corpus apply_ordering(const Corpus& corpus, const ScoreVector& scores, const OrderingConfig& ord,
                      std::uint64_t fallback_seed)
{
    switch (ord.strategy) {
    case OrderingStrategy::shuffle:
        scores.aligned(corpus);  // coverage check keeps every strategy's contract uniform
        return order_shuffle(corpus, ord.seed.value_or(fallback_seed));
    case OrderingStrategy::sort_ascending: return order_sort(corpus, scores, true);
    case OrderingStrategy::sort_descending: return order_sort(corpus, scores, false);
    case OrderingStrategy::fold: return order_fold(corpus, scores, ord.layers, ord.fold_start);
    }
    fail(ErrorKind::domain, "unknown ordering strategy");
}

Corpus compose(const Corpus& corpus, const ScoreVector& scores, const std::optional<SelectionConfig>& sel,
               const OrderingConfig& ord)
{
    if (!sel)
        return apply_ordering(corpus, scores, ord);
    const Corpus subset = select_topk(corpus, scores, sel->ratio);
    ScoreVector sub_scores;
    const auto values = scores.aligned(corpus);
    std::unordered_map<std::string_view, double> by_id;
    for (std::size_t i = 0; i < corpus.size(); ++i)
        by_id.emplace(corpus[i].id, values[i]);
    for (const auto& s : subset)
        sub_scores.entries.emplace_back(s.id, by_id.at(s.id));
    return apply_ordering(subset, sub_scores, ord);
}

nlohmann::json to_json(const OrderingConfig& ord)
{
    nlohmann::json j = {{"strategy", to_string(ord.strategy)},
                        {"layers", ord.layers},
                        {"offset_order", ord.fold_start == FoldStart::first_position}};
    j["seed"] = ord.seed ? nlohmann::json(*ord.seed) : nlohmann::json(nullptr);
    return j;
}

OrderingConfig ordering_config_from_json(const nlohmann::json& j)
{
    OrderingConfig ord;
    try {
        ord.strategy = parse_strategy(j.at("strategy").get<std::string>());
        ord.layers = j.value("layers", ord.layers);
        if (j.value("offset_order", false))
            ord.fold_start = FoldStart::first_position;
        if (j.contains("seed") && !j["seed"].is_null())
            ord.seed = j["seed"].get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::format, std::string("bad ordering config: ") + e.what());
    }
    if (ord.layers < 1)
        fail(ErrorKind::domain, "fold layers must be >= 1");
    return ord;
}

}  // namespace delt
