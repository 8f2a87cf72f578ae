#include "delt/tinylm.hpp"

#include "delt/error.hpp"
#include "delt/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace delt {

void ModelConfig::validate() const
{
    if (context_window < 1 || embed_dim < 1 || hidden_dim < 1 || vocab_size < 1)
        fail(ErrorKind::domain, "model dimensions must all be >= 1");
    if (vocab_size <= Tokenizer::bos)
        fail(ErrorKind::domain, "vocab size must cover the BOS token");
}

std::size_t ModelConfig::param_count() const { return ParamLayout::of(*this).total; }

ParamLayout ParamLayout::of(const ModelConfig& cfg)
{
    const std::size_t v = cfg.vocab_size, d = cfg.embed_dim, c = cfg.context_window, h = cfg.hidden_dim;
    ParamLayout l;
    l.embedding = 0;
    l.w1 = l.embedding + v * d;
    l.b1 = l.w1 + c * d * h;
    l.w2 = l.b1 + h;
    l.b2 = l.w2 + h * v;
    l.total = l.b2 + v;
    return l;
}

std::span<const double> ModelParams::embedding_row(TokenId token) const
{
    const std::size_t d = config.embed_dim;
    return std::span<const double>(theta).subspan(static_cast<std::size_t>(token) * d, d);
}

Workspace::Workspace(const ModelConfig& cfg)
    : input(static_cast<std::size_t>(cfg.context_window) * cfg.embed_dim),
      hidden(cfg.hidden_dim),
      logits(cfg.vocab_size),
      d_hidden(cfg.hidden_dim),
      d_pre(cfg.hidden_dim),
      d_input(static_cast<std::size_t>(cfg.context_window) * cfg.embed_dim)
{}

ModelParams init_params(const ModelConfig& config)
{
    config.validate();
    const auto layout = ParamLayout::of(config);
    ModelParams p{config, std::vector<double>(layout.total, 0.0)};
    std::mt19937_64 rng(config.seed);

    auto fill = [&](std::size_t begin, std::size_t end, double fan_in) {
        std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(fan_in));
        for (std::size_t i = begin; i < end; ++i)
            p.theta[i] = dist(rng);
    };
    // Embedding lookup acts on a one-hot input, so its fan-in is 1.
    fill(layout.embedding, layout.w1, 1.0);
    fill(layout.w1, layout.b1, static_cast<double>(config.context_window) * config.embed_dim);
    fill(layout.w2, layout.b2, static_cast<double>(config.hidden_dim));
    return p;
}

namespace {

void check_sequence(const ModelConfig& cfg, std::span<const TokenId> tokens)
{
    if (tokens.size() < 2)
        fail(ErrorKind::degenerate_sample, "sequence of length " + std::to_string(tokens.size()) +
                                               " has no predictable position");
    for (TokenId t : tokens)
        if (t < 0 || t >= cfg.vocab_size)
            fail(ErrorKind::domain, "token id " + std::to_string(t) + " outside vocabulary");
}

// Shared forward pass for position `pos` (predicting tokens[pos]); fills
// input, hidden, logits and returns log-sum-exp of the logits.
struct Forward {
    const ModelConfig& cfg;
    const ParamLayout& layout;
    const double* theta;

    TokenId context_token(std::span<const TokenId> tokens, std::size_t pos, int j) const
    {
        const auto idx = static_cast<std::ptrdiff_t>(pos) - cfg.context_window + j;
        return idx < 0 ? Tokenizer::bos : tokens[static_cast<std::size_t>(idx)];
    }

    void hidden_layer(std::span<const TokenId> tokens, std::size_t pos, std::vector<double>& input,
                      std::vector<double>& hidden) const
    {
        const int c = cfg.context_window, d = cfg.embed_dim, h = cfg.hidden_dim;
        for (int j = 0; j < c; ++j) {
            const double* row = theta + layout.embedding + static_cast<std::size_t>(context_token(tokens, pos, j)) * d;
            std::copy(row, row + d, input.begin() + static_cast<std::ptrdiff_t>(j) * d);
        }
        const double* w1 = theta + layout.w1;
        const double* b1 = theta + layout.b1;
        std::copy(b1, b1 + h, hidden.begin());
        for (int i = 0; i < c * d; ++i) {
            const double x = input[i];
            const double* wrow = w1 + static_cast<std::size_t>(i) * h;
            for (int k = 0; k < h; ++k)
                hidden[k] += x * wrow[k];
        }
        for (int k = 0; k < h; ++k)
            hidden[k] = std::tanh(hidden[k]);
    }

    double run(std::span<const TokenId> tokens, std::size_t pos, std::vector<double>& input,
               std::vector<double>& hidden, std::vector<double>& logits) const
    {
        const int h = cfg.hidden_dim, v = cfg.vocab_size;
        hidden_layer(tokens, pos, input, hidden);
        const double* w2 = theta + layout.w2;
        const double* b2 = theta + layout.b2;
        std::copy(b2, b2 + v, logits.begin());
        for (int k = 0; k < h; ++k) {
            const double a = hidden[k];
            const double* wrow = w2 + static_cast<std::size_t>(k) * v;
            for (int o = 0; o < v; ++o)
                logits[o] += a * wrow[o];
        }
        const double mx = *std::max_element(logits.begin(), logits.end());
        double sum = 0.0;
        for (int o = 0; o < v; ++o)
            sum += std::exp(logits[o] - mx);
        return mx + std::log(sum);
    }
};

double reduction_scale(const ModelConfig& cfg, std::size_t positions)
{
    return cfg.reduction == LossReduction::mean ? 1.0 / static_cast<double>(positions) : 1.0;
}

}  // namespace

double loss_with(const ModelParams& params, std::span<const TokenId> tokens, Workspace& ws)
{
    const auto& cfg = params.config;
    check_sequence(cfg, tokens);
    const auto layout = ParamLayout::of(cfg);
    Forward fwd{cfg, layout, params.theta.data()};
    double total = 0.0;
    for (std::size_t pos = 1; pos < tokens.size(); ++pos) {
        const double lse = fwd.run(tokens, pos, ws.input, ws.hidden, ws.logits);
        total += lse - ws.logits[tokens[pos]];
    }
    return total * reduction_scale(cfg, tokens.size() - 1);
}

double value_and_gradient(const ModelParams& params, std::span<const TokenId> tokens, std::span<double> grad,
                          Workspace& ws)
{
    const auto& cfg = params.config;
    check_sequence(cfg, tokens);
    const auto layout = ParamLayout::of(cfg);
    if (grad.size() != layout.total)
        fail(ErrorKind::shape, "gradient buffer has wrong length");
    std::fill(grad.begin(), grad.end(), 0.0);

    const int c = cfg.context_window, d = cfg.embed_dim, h = cfg.hidden_dim, v = cfg.vocab_size;
    const double* theta = params.theta.data();
    const double* w1 = theta + layout.w1;
    const double* w2 = theta + layout.w2;
    double* g_emb = grad.data() + layout.embedding;
    double* g_w1 = grad.data() + layout.w1;
    double* g_b1 = grad.data() + layout.b1;
    double* g_w2 = grad.data() + layout.w2;
    double* g_b2 = grad.data() + layout.b2;

    Forward fwd{cfg, layout, theta};
    const double scale = reduction_scale(cfg, tokens.size() - 1);
    double total = 0.0;
    for (std::size_t pos = 1; pos < tokens.size(); ++pos) {
        const double lse = fwd.run(tokens, pos, ws.input, ws.hidden, ws.logits);
        const TokenId target = tokens[pos];
        total += lse - ws.logits[target];

        // logits become dL/dz in place
        for (int o = 0; o < v; ++o)
            ws.logits[o] = scale * std::exp(ws.logits[o] - lse);
        ws.logits[target] -= scale;

        for (int o = 0; o < v; ++o)
            g_b2[o] += ws.logits[o];
        for (int k = 0; k < h; ++k) {
            const double a = ws.hidden[k];
            const double* wrow = w2 + static_cast<std::size_t>(k) * v;
            double* grow = g_w2 + static_cast<std::size_t>(k) * v;
            double acc = 0.0;
            for (int o = 0; o < v; ++o) {
                grow[o] += a * ws.logits[o];
                acc += wrow[o] * ws.logits[o];
            }
            ws.d_pre[k] = acc * (1.0 - a * a);
        }
        for (int k = 0; k < h; ++k)
            g_b1[k] += ws.d_pre[k];
        for (int i = 0; i < c * d; ++i) {
            const double x = ws.input[i];
            const double* wrow = w1 + static_cast<std::size_t>(i) * h;
            double* grow = g_w1 + static_cast<std::size_t>(i) * h;
            double acc = 0.0;
            for (int k = 0; k < h; ++k) {
                grow[k] += x * ws.d_pre[k];
                acc += wrow[k] * ws.d_pre[k];
            }
            ws.d_input[i] = acc;
        }
        for (int j = 0; j < c; ++j) {
            double* row = g_emb + static_cast<std::size_t>(fwd.context_token(tokens, pos, j)) * d;
            const double* src = ws.d_input.data() + static_cast<std::size_t>(j) * d;
            for (int e = 0; e < d; ++e)
                row[e] += src[e];
        }
    }
    return total * scale;
}

std::vector<double> mean_hidden_state(const ModelParams& params, std::span<const TokenId> tokens)
{
    const auto& cfg = params.config;
    check_sequence(cfg, tokens);
    const auto layout = ParamLayout::of(cfg);
    Forward fwd{cfg, layout, params.theta.data()};
    std::vector<double> input(static_cast<std::size_t>(cfg.context_window) * cfg.embed_dim);
    std::vector<double> hidden(cfg.hidden_dim);
    std::vector<double> out(cfg.hidden_dim, 0.0);
    // window ending at token i, for every token after BOS
    for (std::size_t pos = 2; pos <= tokens.size(); ++pos) {
        fwd.hidden_layer(tokens, pos, input, hidden);
        for (std::size_t k = 0; k < out.size(); ++k)
            out[k] += hidden[k];
    }
    for (double& x : out)
        x /= static_cast<double>(tokens.size() - 1);
    return out;
}

double sample_loss(const ModelParams& params, std::span<const TokenId> tokens)
{
    Workspace ws(params.config);
    return loss_with(params, tokens, ws);
}

Gradient sample_gradient(const ModelParams& params, std::span<const TokenId> tokens)
{
    Workspace ws(params.config);
    Gradient g{std::vector<double>(params.theta.size())};
    value_and_gradient(params, tokens, g.vec, ws);
    return g;
}

namespace {

std::vector<double> checked_weights(const Corpus& corpus, const ScoreVector& weights)
{
    auto w = weights.aligned(corpus);
    for (std::size_t i = 0; i < w.size(); ++i)
        if (w[i] < 0.0)
            fail(ErrorKind::weight_domain, "negative weight for sample '" + corpus[i].id + "'");
    return w;
}

std::vector<double> uniform_weights(const Corpus& eval)
{
    return std::vector<double>(eval.size(), 1.0 / static_cast<double>(eval.size()));
}

}  // namespace

double weighted_batch_loss(const ModelParams& params, const Corpus& corpus, const ScoreVector& weights)
{
    const auto w = checked_weights(corpus, weights);
    const auto losses = kernels::omp::sample_losses(params, token_views(corpus));
    double total = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i)
        total += w[i] * losses[i];
    return total;
}

Gradient weighted_batch_gradient(const ModelParams& params, const Corpus& corpus, const ScoreVector& weights)
{
    const auto w = checked_weights(corpus, weights);
    return Gradient{kernels::omp::weighted_loss_and_gradient(params, token_views(corpus), w).grad};
}

double downstream_loss(const ModelParams& params, const Corpus& eval)
{
    if (eval.size() == 0)
        fail(ErrorKind::empty_eval, "evaluation corpus is empty");
    const auto losses = kernels::omp::sample_losses(params, token_views(eval));
    double total = 0.0;
    for (double l : losses)
        total += l;
    return total / static_cast<double>(losses.size());
}

Gradient downstream_gradient(const ModelParams& params, const Corpus& eval)
{
    if (eval.size() == 0)
        fail(ErrorKind::empty_eval, "evaluation corpus is empty");
    return Gradient{kernels::omp::weighted_loss_and_gradient(params, token_views(eval), uniform_weights(eval)).grad};
}

ModelParams sgd_step(const ModelParams& params, const Gradient& g, double eta)
{
    if (g.vec.size() != params.theta.size())
        fail(ErrorKind::shape, "gradient length " + std::to_string(g.vec.size()) + " != parameter count " +
                                   std::to_string(params.theta.size()));
    if (!(eta >= 0.0) || !std::isfinite(eta))
        fail(ErrorKind::domain, "learning rate must be finite and non-negative");
    ModelParams out = params;
    for (std::size_t i = 0; i < out.theta.size(); ++i)
        out.theta[i] -= eta * g.vec[i];
    return out;
}

double dot(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size())
        fail(ErrorKind::shape, "dot product of vectors with different lengths");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

std::vector<double> finite_difference_hvp(const GradientFn& grad_fn, std::span<const double> theta,
                                          std::span<const double> v)
{
    if (v.size() != theta.size())
        fail(ErrorKind::shape, "hvp direction length " + std::to_string(v.size()) + " != parameter count " +
                                   std::to_string(theta.size()));
    const double s = norm2(v);
    if (s == 0.0)
        return std::vector<double>(theta.size(), 0.0);

    double max_abs = 0.0;
    for (double t : theta)
        max_abs = std::max(max_abs, std::abs(t));
    const double eps = 1e-3 * (1.0 + max_abs);
    const double scale = std::max(s, std::numeric_limits<double>::min());

    std::vector<double> plus(theta.begin(), theta.end());
    std::vector<double> minus(theta.begin(), theta.end());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double u = v[i] / scale;
        plus[i] += eps * u;
        minus[i] -= eps * u;
    }
    const auto gp = grad_fn(plus);
    const auto gm = grad_fn(minus);
    std::vector<double> out(theta.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = (gp[i] - gm[i]) / (2.0 * eps) * scale;
    return out;
}

std::vector<double> hvp(const ModelParams& params, const Corpus& corpus, const ScoreVector& weights,
                        std::span<const double> v)
{
    const auto w = checked_weights(corpus, weights);
    const auto seqs = token_views(corpus);
    GradientFn grad = [&](std::span<const double> theta) {
        ModelParams at{params.config, std::vector<double>(theta.begin(), theta.end())};
        return kernels::omp::weighted_loss_and_gradient(at, seqs, w).grad;
    };
    return finite_difference_hvp(grad, params.theta, v);
}

void set_num_threads(int n)
{
    if (n > 0)
        omp_set_num_threads(n);
}

}  // namespace delt
