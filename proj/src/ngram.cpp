#include "delt/ngram.hpp"

#include "delt/error.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace delt {

std::uint64_t NgramModel::count(const std::vector<TokenId>& context, TokenId next) const
{
    auto it = counts.find(context);
    if (it == counts.end())
        return 0;
    auto jt = it->second.next.find(next);
    return jt == it->second.next.end() ? 0 : jt->second;
}

double NgramModel::probability(const std::vector<TokenId>& context, TokenId next) const
{
    std::uint64_t total = 0, c = 0;
    if (auto it = counts.find(context); it != counts.end()) {
        total = it->second.total;
        if (auto jt = it->second.next.find(next); jt != it->second.next.end())
            c = jt->second;
    }
    return (static_cast<double>(c) + smoothing) /
           (static_cast<double>(total) + smoothing * static_cast<double>(vocab_size));
}

std::vector<TokenId> NgramModel::context_at(std::span<const TokenId> tokens, std::size_t pos) const
{
    std::vector<TokenId> ctx(static_cast<std::size_t>(order - 1));
    for (std::size_t j = 0; j < ctx.size(); ++j) {
        const auto idx = static_cast<std::ptrdiff_t>(pos) - static_cast<std::ptrdiff_t>(ctx.size()) +
                         static_cast<std::ptrdiff_t>(j);
        ctx[j] = idx < 0 ? Tokenizer::bos : tokens[static_cast<std::size_t>(idx)];
    }
    return ctx;
}

NgramModel fit_ngram(const Corpus& corpus, int order, double smoothing)
{
    if (order < 1)
        fail(ErrorKind::domain, "n-gram order must be >= 1");
    if (!(smoothing > 0.0) || !std::isfinite(smoothing))
        fail(ErrorKind::domain, "smoothing k must be positive");
    NgramModel model;
    model.order = order;
    model.smoothing = smoothing;
    for (const auto& s : corpus) {
        for (std::size_t pos = 1; pos < s.tokens.size(); ++pos) {
            auto& entry = model.counts[model.context_at(s.tokens, pos)];
            ++entry.total;
            ++entry.next[s.tokens[pos]];
        }
    }
    return model;
}

double perplexity(const NgramModel& model, std::span<const TokenId> tokens)
{
    if (tokens.size() < 2)
        fail(ErrorKind::degenerate_sample, "perplexity needs at least one predictable position");
    double nll = 0.0;
    for (std::size_t pos = 1; pos < tokens.size(); ++pos)
        nll -= std::log(model.probability(model.context_at(tokens, pos), tokens[pos]));
    return std::exp(nll / static_cast<double>(tokens.size() - 1));
}

ScoreVector kenlm_score(const Corpus& corpus, const NgramModel& model)
{
    std::vector<double> scores(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        try {
            scores[i] = -perplexity(model, corpus[i].tokens);
        } catch (const Error& e) {
            throw Error(e.kind(), "sample '" + corpus[i].id + "': " + e.detail());
        }
    }
    return ScoreVector::from_values(corpus, scores);
}

void save_ngram(const NgramModel& model, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        fail(ErrorKind::io, "cannot write " + path.string());
    char k[32];
    std::snprintf(k, sizeof k, "%.17g", model.smoothing);
    out << "# delt-ngram/1 order=" << model.order << " smoothing=" << k << " vocab=" << model.vocab_size << '\n';
    for (const auto& [ctx, entry] : model.counts) {
        std::string ctx_str;
        for (std::size_t j = 0; j < ctx.size(); ++j)
            ctx_str += (j ? "," : "") + std::to_string(ctx[j]);
        if (ctx_str.empty())
            ctx_str = "-";
        for (const auto& [next, c] : entry.next)
            out << ctx_str << '\t' << next << '\t' << c << '\n';
    }
    if (!out)
        fail(ErrorKind::io, "write failed for " + path.string());
}

NgramModel load_ngram(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail(ErrorKind::io, "cannot open " + path.string());
    NgramModel model;
    std::string header;
    std::getline(in, header);
    if (std::sscanf(header.c_str(), "# delt-ngram/1 order=%d smoothing=%lf vocab=%d", &model.order,
                    &model.smoothing, &model.vocab_size) != 3)
        fail(ErrorKind::format, path.string() + ": missing n-gram header");
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty())
            continue;
        std::istringstream fields(line);
        std::string ctx_str;
        TokenId next = 0;
        std::uint64_t c = 0;
        if (!(std::getline(fields, ctx_str, '\t') && fields >> next >> c))
            fail(ErrorKind::format, path.string() + ": bad count line " + std::to_string(line_no));
        std::vector<TokenId> ctx;
        if (ctx_str != "-") {
            std::istringstream parts(ctx_str);
            std::string part;
            while (std::getline(parts, part, ','))
                ctx.push_back(static_cast<TokenId>(std::stoi(part)));
        }
        if (static_cast<int>(ctx.size()) != model.order - 1)
            fail(ErrorKind::format, path.string() + ": context length mismatch at line " + std::to_string(line_no));
        auto& entry = model.counts[ctx];
        entry.next[next] += c;
        entry.total += c;
    }
    return model;
}

}  // namespace delt
