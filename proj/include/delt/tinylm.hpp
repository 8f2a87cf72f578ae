#pragma once

#include "delt/corpus.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace delt {

enum class LossReduction { mean, sum };

/// Fixed-window feed-forward next-token model:
/// embed -> concat window -> tanh hidden layer -> vocabulary logits.
struct ModelConfig {
    int context_window = 8;
    int embed_dim = 16;
    int hidden_dim = 32;
    int vocab_size = Tokenizer::vocab_size;
    std::uint64_t seed = 0;
    LossReduction reduction = LossReduction::mean;

    void validate() const;
    std::size_t param_count() const;

    bool operator==(const ModelConfig&) const = default;
};

/// Offsets of each parameter block inside the flat vector. Matrices are
/// row-major: embedding [V x d], w1 [(c*d) x h], w2 [h x V].
struct ParamLayout {
    std::size_t embedding = 0;
    std::size_t w1 = 0;
    std::size_t b1 = 0;
    std::size_t w2 = 0;
    std::size_t b2 = 0;
    std::size_t total = 0;

    static ParamLayout of(const ModelConfig& config);
};

struct ModelParams {
    ModelConfig config;
    std::vector<double> theta;

    std::span<const double> embedding_row(TokenId token) const;
};

struct Gradient {
    std::vector<double> vec;
};

/// Scratch buffers for one forward/backward pass; reuse across calls to
/// avoid allocation in hot loops. One per thread.
class Workspace {
public:
    explicit Workspace(const ModelConfig& config);

private:
    friend double value_and_gradient(const ModelParams&, std::span<const TokenId>, std::span<double>, Workspace&);
    friend double loss_with(const ModelParams&, std::span<const TokenId>, Workspace&);

    std::vector<double> input;
    std::vector<double> hidden;
    std::vector<double> logits;
    std::vector<double> d_hidden;
    std::vector<double> d_pre;
    std::vector<double> d_input;
};

ModelParams init_params(const ModelConfig& config);

double sample_loss(const ModelParams& params, std::span<const TokenId> tokens);
/// Mean over tokens after BOS of the hidden activation of the window ending
/// at that token.
std::vector<double> mean_hidden_state(const ModelParams& params, std::span<const TokenId> tokens);
Gradient sample_gradient(const ModelParams& params, std::span<const TokenId> tokens);

/// Loss of one sequence; `grad` (length N) is overwritten with its gradient.
double value_and_gradient(const ModelParams& params, std::span<const TokenId> tokens, std::span<double> grad,
                          Workspace& ws);
double loss_with(const ModelParams& params, std::span<const TokenId> tokens, Workspace& ws);

/// Sum of weights[n] * sample_loss(x_n). Weights come from a score vector
/// aligned to the corpus and must be non-negative.
double weighted_batch_loss(const ModelParams& params, const Corpus& corpus, const ScoreVector& weights);
Gradient weighted_batch_gradient(const ModelParams& params, const Corpus& corpus, const ScoreVector& weights);

double downstream_loss(const ModelParams& params, const Corpus& eval);
Gradient downstream_gradient(const ModelParams& params, const Corpus& eval);

ModelParams sgd_step(const ModelParams& params, const Gradient& g, double eta);

using GradientFn = std::function<std::vector<double>(std::span<const double> theta)>;

/// Symmetric finite-difference Hessian-vector product of `grad_fn` at `theta`.
/// The direction is normalized to unit length and the step is
/// 1e-3 * (1 + max|theta|); v = 0 gives an exact zero vector.
std::vector<double> finite_difference_hvp(const GradientFn& grad_fn, std::span<const double> theta,
                                          std::span<const double> v);

/// Hessian of the weighted batch loss applied to v.
std::vector<double> hvp(const ModelParams& params, const Corpus& corpus, const ScoreVector& weights,
                        std::span<const double> v);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

/// Number of OpenMP workers used by batch kernels (0 = runtime default).
void set_num_threads(int n);

}  // namespace delt
