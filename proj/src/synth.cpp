#include "delt/synth.hpp"

#include "delt/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <string_view>

namespace delt {

namespace {

constexpr std::array<std::string_view, 12> subjects = {
    "the cat", "a small dog", "the old man", "my sister", "the farmer", "a young girl",
    "the teacher", "our neighbor", "the baker", "a tired student", "the captain", "her brother"};
constexpr std::array<std::string_view, 12> verbs = {
    "sees", "finds", "likes", "carries", "paints", "reads", "builds", "follows", "cleans", "opens", "wants",
    "brings"};
constexpr std::array<std::string_view, 12> objects = {
    "the red ball", "a warm bread", "the green door", "a long letter", "the wooden box", "a blue kite",
    "the garden gate", "a quiet song", "the big table", "a new book", "the river boat", "an apple"};
constexpr std::array<std::string_view, 8> endings = {
    " in the morning", " after lunch", " near the house", " by the river", "", "", " every day", " at night"};

template <std::size_t N>
std::string_view pick(const std::array<std::string_view, N>& words, std::mt19937_64& rng)
{
    std::uniform_int_distribution<std::size_t> d(0, N - 1);
    return words[d(rng)];
}

std::size_t target_length(std::mt19937_64& rng, std::size_t min_bytes, std::size_t max_bytes)
{
    std::uniform_int_distribution<std::size_t> d(min_bytes, std::max(min_bytes, max_bytes));
    return d(rng);
}

}  // namespace

std::string clean_text(std::uint64_t seed, std::size_t min_bytes, std::size_t max_bytes)
{
    std::mt19937_64 rng(seed);
    const std::size_t len = target_length(rng, min_bytes, max_bytes);
    std::string out;
    while (out.size() < len) {
        std::string sentence;
        sentence += pick(subjects, rng);
        sentence += ' ';
        sentence += pick(verbs, rng);
        sentence += ' ';
        sentence += pick(objects, rng);
        sentence += pick(endings, rng);
        sentence += ". ";
        sentence[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(sentence[0])));
        out += sentence;
    }
    out.resize(len);
    while (!out.empty() && out.back() == ' ')
        out.pop_back();
    return out;
}

std::string noise_text(std::uint64_t seed, std::size_t min_bytes, std::size_t max_bytes)
{
    std::mt19937_64 rng(seed);
    const std::size_t len = target_length(rng, min_bytes, max_bytes);
    std::uniform_int_distribution<int> byte(0x21, 0x7e);
    std::string out(len, ' ');
    for (char& c : out)
        c = static_cast<char>(byte(rng));
    return out;
}

SynthCorpus make_synthetic(const SynthConfig& cfg)
{
    if (cfg.samples < 1 || cfg.eval_samples < 1)
        fail(ErrorKind::domain, "synthetic corpora need at least one sample each");
    if (!(cfg.noise_fraction >= 0.0 && cfg.noise_fraction <= 1.0))
        fail(ErrorKind::domain, "noise fraction must lie in [0, 1]");
    if (cfg.min_bytes < 1 || cfg.max_bytes < cfg.min_bytes)
        fail(ErrorKind::domain, "synthetic length bounds must satisfy 1 <= min <= max");

    std::mt19937_64 rng(cfg.seed);
    const auto noise_count =
        static_cast<std::size_t>(std::llround(cfg.noise_fraction * static_cast<double>(cfg.samples)));
    std::vector<bool> is_noise(cfg.samples, false);
    std::fill(is_noise.begin(), is_noise.begin() + static_cast<std::ptrdiff_t>(noise_count), true);
    for (std::size_t i = cfg.samples; i > 1; --i) {
        std::uniform_int_distribution<std::size_t> d(0, i - 1);
        std::swap(is_noise[i - 1], is_noise[d(rng)]);
    }

    std::vector<Sample> train;
    train.reserve(cfg.samples);
    for (std::size_t i = 0; i < cfg.samples; ++i) {
        const std::uint64_t s = rng();
        char id[32];
        std::snprintf(id, sizeof id, "s%05zu", i);
        std::string text = is_noise[i] ? noise_text(s, cfg.min_bytes, cfg.max_bytes)
                                       : clean_text(s, cfg.min_bytes, cfg.max_bytes);
        train.push_back(Sample{id, text, Tokenizer::tokenize(text)});
    }
    std::vector<Sample> eval;
    for (std::size_t i = 0; i < cfg.eval_samples; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "e%05zu", i);
        std::string text = clean_text(rng(), cfg.min_bytes, cfg.max_bytes);
        eval.push_back(Sample{id, text, Tokenizer::tokenize(text)});
    }
    const auto prov = "synthetic seed=" + std::to_string(cfg.seed);
    return SynthCorpus{Corpus(std::move(train), prov + " noise=" + std::to_string(noise_count)),
                       Corpus(std::move(eval), prov + " eval"), std::move(is_noise)};
}

void write_synthetic(const SynthCorpus& synth, const std::filesystem::path& train_path,
                     const std::filesystem::path& eval_path)
{
    auto write = [](const Corpus& c, const std::vector<bool>* noise, const std::filesystem::path& path) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out)
            fail(ErrorKind::io, "cannot write " + path.string());
        for (std::size_t i = 0; i < c.size(); ++i) {
            nlohmann::json line = {{"id", c[i].id}, {"text", c[i].text}};
            if (noise)
                line["noise"] = static_cast<bool>((*noise)[i]);
            out << line.dump() << '\n';
        }
        if (!out)
            fail(ErrorKind::io, "write failed for " + path.string());
    };
    write(synth.train, &synth.is_noise, train_path);
    write(synth.eval, nullptr, eval_path);
}

}  // namespace delt
