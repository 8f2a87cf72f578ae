#include "delt/corpus.hpp"

#include "delt/error.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace delt {

using json = nlohmann::json;

TokenSeq Tokenizer::tokenize(std::string_view text)
{
    TokenSeq out;
    out.reserve(text.size() + 1);
    out.push_back(bos);
    for (char c : text)
        out.push_back(static_cast<TokenId>(static_cast<unsigned char>(c)));
    return out;
}

std::string Tokenizer::detokenize(std::span<const TokenId> tokens)
{
    std::string out;
    if (!tokens.empty() && tokens.front() == bos)
        tokens = tokens.subspan(1);
    out.reserve(tokens.size());
    for (TokenId t : tokens) {
        if (t < 0 || t > 255)
            fail(ErrorKind::domain, "token id " + std::to_string(t) + " is not a byte");
        out.push_back(static_cast<char>(static_cast<unsigned char>(t)));
    }
    return out;
}

Corpus::Corpus(std::vector<Sample> samples, std::string provenance)
    : samples_(std::move(samples)), provenance_(std::move(provenance))
{
    if (samples_.empty())
        fail(ErrorKind::ingestion, "corpus must contain at least one sample");
    std::unordered_set<std::string_view> seen;
    for (const auto& s : samples_)
        if (!seen.insert(s.id).second)
            fail(ErrorKind::duplicate_id, "sample id '" + s.id + "' appears more than once");
}

Corpus Corpus::reordered(std::span<const std::size_t> indices, std::string_view step) const
{
    std::vector<Sample> out;
    out.reserve(indices.size());
    for (std::size_t i : indices)
        out.push_back(samples_.at(i));
    std::string prov = provenance_;
    if (!step.empty()) {
        if (!prov.empty())
            prov += " | ";
        prov += step;
    }
    return Corpus(std::move(out), std::move(prov));
}

std::vector<double> ScoreVector::aligned(const Corpus& corpus) const
{
    if (entries.size() != corpus.size())
        fail(ErrorKind::score_coverage, "score vector has " + std::to_string(entries.size()) +
                                            " entries for a corpus of " + std::to_string(corpus.size()));
    std::unordered_map<std::string_view, double> by_id;
    by_id.reserve(entries.size());
    for (const auto& [id, score] : entries) {
        if (!std::isfinite(score))
            fail(ErrorKind::domain, "score for '" + id + "' is not finite");
        if (!by_id.emplace(id, score).second)
            fail(ErrorKind::score_coverage, "score vector lists id '" + id + "' twice");
    }
    std::vector<double> out;
    out.reserve(corpus.size());
    for (const auto& s : corpus) {
        auto it = by_id.find(s.id);
        if (it == by_id.end())
            fail(ErrorKind::score_coverage, "no score for sample '" + s.id + "'");
        out.push_back(it->second);
    }
    return out;
}

ScoreVector ScoreVector::from_values(const Corpus& corpus, std::span<const double> values)
{
    if (values.size() != corpus.size())
        fail(ErrorKind::score_coverage, "value count does not match corpus size");
    ScoreVector out;
    out.entries.reserve(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
        out.entries.emplace_back(corpus[i].id, values[i]);
    return out;
}

Corpus parse_jsonl(std::string_view content, std::string source_name, const LoadOptions& options)
{
    std::vector<Sample> samples;
    std::vector<std::string> rejected;
    std::unordered_set<std::string> ids;
    std::size_t truncated = 0;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < content.size()) {
        auto nl = content.find('\n', pos);
        if (nl == std::string_view::npos)
            nl = content.size();
        std::string_view line = content.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos)
            continue;

        const auto where = source_name + ":" + std::to_string(line_no);
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error&) {
            fail(ErrorKind::ingestion, "malformed JSON at line " + std::to_string(line_no) + " (" + where + ")");
        }
        if (!obj.is_object())
            fail(ErrorKind::ingestion, "line " + std::to_string(line_no) + " is not a JSON object (" + where + ")");
        auto id_it = obj.find("id");
        auto text_it = obj.find("text");
        if (id_it == obj.end() || !id_it->is_string())
            fail(ErrorKind::ingestion, "line " + std::to_string(line_no) + " lacks a string \"id\" (" + where + ")");
        if (text_it == obj.end() || !text_it->is_string())
            fail(ErrorKind::ingestion, "line " + std::to_string(line_no) + " lacks a string \"text\" (" + where + ")");

        Sample s{id_it->get<std::string>(), text_it->get<std::string>(), {}};
        if (!ids.insert(s.id).second)
            fail(ErrorKind::duplicate_id,
                 "sample id '" + s.id + "' at line " + std::to_string(line_no) + " repeats an earlier id");
        if (s.text.empty()) {
            rejected.push_back(s.id);
            continue;
        }
        s.tokens = Tokenizer::tokenize(s.text);
        if (options.max_tokens >= 2 && s.tokens.size() > options.max_tokens) {
            s.tokens.resize(options.max_tokens);
            ++truncated;
        }
        samples.push_back(std::move(s));
    }
    if (!rejected.empty()) {
        std::string list;
        for (const auto& id : rejected)
            list += (list.empty() ? "" : ", ") + id;
        fail(ErrorKind::rejected_sample, "empty text in samples: " + list);
    }
    if (samples.empty())
        fail(ErrorKind::ingestion, "no samples in " + source_name);

    std::string provenance = "loaded " + source_name;
    if (truncated > 0)
        provenance += "; truncated " + std::to_string(truncated) + " samples to " +
                      std::to_string(options.max_tokens) + " tokens";
    return Corpus(std::move(samples), std::move(provenance));
}

namespace {

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail(ErrorKind::io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::ofstream open_out(const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        fail(ErrorKind::io, "cannot write " + path.string());
    return out;
}

}  // namespace

Corpus load_jsonl(const std::filesystem::path& path, const LoadOptions& options)
{
    return parse_jsonl(read_file(path), path.filename().string(), options);
}

void write_corpus_jsonl(const Corpus& corpus, const std::filesystem::path& path, bool with_positions)
{
    auto out = open_out(path);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        json line = {{"id", corpus[i].id}, {"text", corpus[i].text}};
        if (with_positions)
            line["position"] = i;
        out << line.dump() << '\n';
    }
    if (!out)
        fail(ErrorKind::io, "write failed for " + path.string());
}

void write_scores(const Corpus& corpus, const ScoreVector& scores, const std::filesystem::path& path)
{
    const auto values = scores.aligned(corpus);
    auto out = open_out(path);
    for (std::size_t i = 0; i < corpus.size(); ++i)
        out << json{{"id", corpus[i].id}, {"score", values[i]}}.dump() << '\n';
    if (!out)
        fail(ErrorKind::io, "write failed for " + path.string());
}

ScoreVector read_scores(const std::filesystem::path& path)
{
    const auto content = read_file(path);
    ScoreVector out;
    std::istringstream in(content);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error&) {
            fail(ErrorKind::ingestion, "malformed score line " + std::to_string(line_no) + " in " + path.string());
        }
        if (!obj.is_object() || !obj.contains("id") || !obj["id"].is_string() || !obj.contains("score") ||
            !obj["score"].is_number())
            fail(ErrorKind::ingestion, "score line " + std::to_string(line_no) + " needs string id and numeric score");
        out.entries.emplace_back(obj["id"].get<std::string>(), obj["score"].get<double>());
    }
    return out;
}

std::vector<const TokenSeq*> token_views(const Corpus& corpus)
{
    std::vector<const TokenSeq*> out;
    out.reserve(corpus.size());
    for (const auto& s : corpus)
        out.push_back(&s.tokens);
    return out;
}

}  // namespace delt
