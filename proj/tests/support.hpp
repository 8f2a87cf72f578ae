#pragma once

#include "delt/corpus.hpp"

#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace testing {

inline delt::Corpus make_corpus(const std::vector<std::string>& texts, const std::string& prefix = "x")
{
    std::vector<delt::Sample> samples;
    for (std::size_t i = 0; i < texts.size(); ++i)
        samples.push_back({prefix + std::to_string(i), texts[i], delt::Tokenizer::tokenize(texts[i])});
    return delt::Corpus(std::move(samples), "test");
}

inline std::string random_text(std::mt19937_64& rng, std::size_t min_len, std::size_t max_len)
{
    std::uniform_int_distribution<std::size_t> len(min_len, max_len);
    std::uniform_int_distribution<int> ch('a', 'h');
    std::string s(len(rng), ' ');
    for (char& c : s)
        c = static_cast<char>(ch(rng));
    return s;
}

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double scale = 1.0)
{
    std::normal_distribution<double> d(0.0, scale);
    std::vector<double> v(n);
    for (double& x : v)
        x = d(rng);
    return v;
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / ("delt_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline double rel_err(double a, double b, double floor = 1e-8)
{
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace testing
