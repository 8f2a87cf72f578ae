#include "delt/annotate.hpp"

#include "delt/checkpoint.hpp"
#include "delt/error.hpp"
#include "delt/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace delt {

using json = nlohmann::json;

void AnnotationConfig::validate() const
{
    if (steps < 2)
        fail(ErrorKind::domain, "annotation needs T >= 2 steps");
    if (!(lm_learning_rate >= 0.0) || !std::isfinite(lm_learning_rate))
        fail(ErrorKind::domain, "annotation learning rate must be finite and non-negative");
    if (!(score_step >= 0.0) || !std::isfinite(score_step))
        fail(ErrorKind::domain, "score step alpha must be finite and non-negative");
    if (outer_iters < 1)
        fail(ErrorKind::domain, "outer_iters must be >= 1");
    model.validate();
}

namespace {

bool all_finite(std::span<const double> v)
{
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

std::vector<double> simplex_weights(const Corpus& corpus, const ScoreVector& gamma)
{
    auto w = gamma.aligned(corpus);
    for (std::size_t i = 0; i < w.size(); ++i)
        if (w[i] < 0.0)
            fail(ErrorKind::weight_domain, "negative weight for sample '" + corpus[i].id + "'");
    return w;
}

GradientFn batch_gradient_fn(const ModelConfig& config, const Corpus& corpus, std::vector<double> weights)
{
    return [config, seqs = token_views(corpus), weights = std::move(weights)](std::span<const double> theta) {
        ModelParams at{config, std::vector<double>(theta.begin(), theta.end())};
        auto r = kernels::omp::weighted_loss_and_gradient(at, seqs, weights);
        if (!std::isfinite(r.loss))
            fail(ErrorKind::divergence, "non-finite loss");
        return std::move(r.grad);
    };
}

Error relabel(const Error& e, const std::string& label)
{
    return Error(e.kind(), label + ": " + e.detail());
}

}  // namespace

std::vector<std::vector<double>> forward_recursion(std::span<const double> theta0, int steps, double eta,
                                                   const GradientFn& train_grad)
{
    std::vector<std::vector<double>> thetas;
    thetas.reserve(static_cast<std::size_t>(steps) + 1);
    thetas.emplace_back(theta0.begin(), theta0.end());
    for (int t = 0; t < steps; ++t) {
        std::vector<double> g;
        try {
            g = train_grad(thetas.back());
        } catch (const Error& e) {
            throw relabel(e, "forward step " + std::to_string(t));
        }
        if (!all_finite(g))
            fail(ErrorKind::divergence, "forward step " + std::to_string(t) + ": non-finite gradient");
        std::vector<double> next = thetas.back();
        for (std::size_t i = 0; i < next.size(); ++i)
            next[i] -= eta * g[i];
        thetas.push_back(std::move(next));
    }
    return thetas;
}

std::vector<std::vector<double>> reverse_recursion(const std::vector<std::vector<double>>& thetas, double eta,
                                                   const GradientFn& downstream_grad, const GradientFn& train_grad)
{
    const int steps = static_cast<int>(thetas.size()) - 1;
    if (steps < 2)
        fail(ErrorKind::domain, "reverse loop needs a trajectory with T >= 2");
    std::vector<std::vector<double>> lambdas(static_cast<std::size_t>(steps));
    lambdas[steps - 1] = downstream_grad(thetas[steps]);
    if (!all_finite(lambdas[steps - 1]))
        fail(ErrorKind::divergence, "reverse step " + std::to_string(steps) + ": non-finite target vector");
    for (int t = steps - 1; t >= 1; --t) {
        const auto& next = lambdas[t];  // lambda_{t+1}
        const auto gj = downstream_grad(thetas[t]);
        std::vector<double> curvature;
        if (eta != 0.0)
            curvature = finite_difference_hvp(train_grad, thetas[t], next);
        std::vector<double> lam(next.size());
        for (std::size_t i = 0; i < lam.size(); ++i)
            lam[i] = (next[i] + gj[i]) - (eta != 0.0 ? eta * curvature[i] : 0.0);
        if (!all_finite(lam))
            fail(ErrorKind::divergence, "reverse step " + std::to_string(t) + ": non-finite target vector");
        lambdas[t - 1] = std::move(lam);
    }
    return lambdas;
}

Trajectory forward_trajectory(const ModelParams& theta0, const Corpus& proxy, const ScoreVector& gamma, int steps,
                              double eta)
{
    if (steps < 2)
        fail(ErrorKind::domain, "trajectory needs T >= 2 steps");
    auto thetas =
        forward_recursion(theta0.theta, steps, eta, batch_gradient_fn(theta0.config, proxy, simplex_weights(proxy, gamma)));
    Trajectory traj;
    traj.eta = eta;
    traj.checkpoints.reserve(thetas.size());
    for (auto& th : thetas)
        traj.checkpoints.push_back(ModelParams{theta0.config, std::move(th)});
    return traj;
}

TargetVectors reverse_target_vectors(const Trajectory& traj, const Corpus& proxy, const ScoreVector& gamma,
                                     const Corpus& eval)
{
    if (eval.size() == 0)
        fail(ErrorKind::empty_eval, "evaluation corpus is empty");
    const auto& config = traj.checkpoints.front().config;
    std::vector<std::vector<double>> thetas;
    thetas.reserve(traj.checkpoints.size());
    for (const auto& p : traj.checkpoints)
        thetas.push_back(p.theta);
    const auto uniform = std::vector<double>(eval.size(), 1.0 / static_cast<double>(eval.size()));
    return TargetVectors{reverse_recursion(thetas, traj.eta, batch_gradient_fn(config, eval, uniform),
                                           batch_gradient_fn(config, proxy, simplex_weights(proxy, gamma)))};
}

StepStatistics step_statistics(const Trajectory& traj, const TargetVectors* targets, const Corpus& proxy)
{
    const int steps = traj.steps();
    if (steps < 2)
        fail(ErrorKind::domain, "trajectory needs T >= 2 steps");
    if (targets && static_cast<int>(targets->lambdas.size()) != steps)
        fail(ErrorKind::shape, "target vectors do not match the trajectory length");
    const auto seqs = token_views(proxy);
    StepStatistics stats;
    stats.grad_norms.assign(proxy.size(), std::vector<double>(static_cast<std::size_t>(steps)));
    if (targets) {
        stats.target_dots.assign(proxy.size(), std::vector<double>(static_cast<std::size_t>(steps - 1)));
        for (int t = 1; t < steps; ++t)
            stats.target_norms.push_back(norm2(targets->at(t + 1)));
    }
    for (int t = 1; t <= steps; ++t) {
        std::span<const double> probe;
        if (targets && t < steps)
            probe = targets->at(t + 1);
        const auto g = kernels::omp::gradient_stats(traj.checkpoints[static_cast<std::size_t>(t)], seqs, probe);
        for (std::size_t n = 0; n < proxy.size(); ++n) {
            stats.grad_norms[n][t - 1] = g.norms[n];
            if (!probe.empty())
                stats.target_dots[n][t - 1] = g.dots[n];
        }
    }
    return stats;
}

LqsTerm lqs_term(const StepStatistics& stats, std::size_t n, int t)
{
    if (stats.target_dots.empty())
        fail(ErrorKind::domain, "statistics were collected without target vectors");
    const double g_now = stats.grad_norms[n][t - 1];
    const double g_next = std::max(stats.grad_norms[n][t], norm_epsilon);
    const double lam = stats.target_norms[t - 1];
    const double d = stats.target_dots[n][t - 1];
    LqsTerm term;
    term.summand = d / g_next;
    term.reliability = lam;
    term.quality = (lam < norm_epsilon || g_now < norm_epsilon) ? 0.0 : d / (lam * g_now);
    term.learnability = g_now / g_next;
    return term;
}

std::vector<double> learnability_from(const StepStatistics& stats)
{
    std::vector<double> out(stats.samples(), 0.0);
    for (std::size_t n = 0; n < out.size(); ++n)
        for (int t = 1; t < stats.steps(); ++t)
            out[n] += stats.grad_norms[n][t - 1] / std::max(stats.grad_norms[n][t], norm_epsilon);
    return out;
}

std::vector<double> quality_from(const StepStatistics& stats)
{
    std::vector<double> out(stats.samples(), 0.0);
    for (std::size_t n = 0; n < out.size(); ++n)
        for (int t = 1; t < stats.steps(); ++t)
            out[n] += lqs_term(stats, n, t).quality;
    return out;
}

std::vector<double> lqs_from(const StepStatistics& stats)
{
    std::vector<double> out(stats.samples(), 0.0);
    for (std::size_t n = 0; n < out.size(); ++n)
        for (int t = 1; t < stats.steps(); ++t)
            out[n] += lqs_term(stats, n, t).summand;
    return out;
}

ScoreVector learnability_scores(const Trajectory& traj, const Corpus& proxy)
{
    const auto stats = step_statistics(traj, nullptr, proxy);
    return ScoreVector::from_values(proxy, learnability_from(stats));
}

ScoreVector quality_scores(const Trajectory& traj, const TargetVectors& targets, const Corpus& proxy)
{
    const auto stats = step_statistics(traj, &targets, proxy);
    return ScoreVector::from_values(proxy, quality_from(stats));
}

ScoreVector lqs_scores(const Trajectory& traj, const TargetVectors& targets, const Corpus& proxy)
{
    const auto stats = step_statistics(traj, &targets, proxy);
    return ScoreVector::from_values(proxy, lqs_from(stats));
}

ScoreVector pds_scores(const Trajectory& traj, const TargetVectors& targets, const Corpus& proxy)
{
    return quality_scores(traj, targets, proxy);
}

std::vector<double> project_simplex(std::span<const double> v)
{
    if (v.empty())
        return {};
    if (!all_finite(v))
        fail(ErrorKind::domain, "simplex projection of a non-finite vector");
    std::vector<double> u(v.begin(), v.end());
    std::sort(u.begin(), u.end(), std::greater<>());
    double cumulative = 0.0, tau = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) {
        cumulative += u[j];
        const double candidate = (cumulative - 1.0) / static_cast<double>(j + 1);
        if (u[j] - candidate > 0.0)
            tau = candidate;
    }
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        out[i] = std::max(v[i] - tau, 0.0);
    return out;
}

AnnotationResult annotate_proxy(const Corpus& proxy, const Corpus& eval, const AnnotationConfig& cfg)
{
    cfg.validate();
    if (eval.size() == 0)
        fail(ErrorKind::empty_eval, "evaluation corpus is empty");
    ModelConfig model = cfg.model;
    model.seed = cfg.seed;
    const ModelParams theta0 = init_params(model);

    std::vector<double> gamma(proxy.size(), 1.0 / static_cast<double>(proxy.size()));
    AnnotationResult result;
    result.config = cfg;
    for (int iter = 0; iter < cfg.outer_iters; ++iter) {
        const auto weights = ScoreVector::from_values(proxy, gamma);
        Trajectory traj;
        TargetVectors targets;
        try {
            traj = forward_trajectory(theta0, proxy, weights, cfg.steps, cfg.lm_learning_rate);
        } catch (const Error& e) {
            throw relabel(e, "forward phase");
        }
        try {
            targets = reverse_target_vectors(traj, proxy, weights, eval);
        } catch (const Error& e) {
            throw relabel(e, "reverse phase");
        }
        result.stats = step_statistics(traj, &targets, proxy);
        const auto raw = lqs_from(result.stats);
        if (!all_finite(raw))
            fail(ErrorKind::divergence, "update phase: non-finite score");
        for (std::size_t n = 0; n < gamma.size(); ++n)
            gamma[n] += cfg.score_step * raw[n];
        gamma = project_simplex(gamma);

        result.raw_scores = ScoreVector::from_values(proxy, raw);
        result.final_params = std::move(traj.checkpoints.back());
    }
    result.gamma_star = ScoreVector::from_values(proxy, gamma);
    result.learnability = ScoreVector::from_values(proxy, learnability_from(result.stats));
    result.quality = ScoreVector::from_values(proxy, quality_from(result.stats));
    result.reliability = result.stats.target_norms;
    return result;
}

json to_json(const AnnotationConfig& cfg)
{
    return json{{"steps", cfg.steps},
                {"lm_learning_rate", cfg.lm_learning_rate},
                {"score_step", cfg.score_step},
                {"outer_iters", cfg.outer_iters},
                {"seed", cfg.seed},
                {"model", to_json(cfg.model)}};
}

AnnotationConfig annotation_config_from_json(const json& j)
{
    AnnotationConfig cfg;
    try {
        cfg.steps = j.value("steps", cfg.steps);
        cfg.lm_learning_rate = j.value("lm_learning_rate", cfg.lm_learning_rate);
        cfg.score_step = j.value("score_step", cfg.score_step);
        cfg.outer_iters = j.value("outer_iters", cfg.outer_iters);
        cfg.seed = j.value("seed", cfg.seed);
    } catch (const json::exception& e) {
        fail(ErrorKind::format, std::string("bad annotation config: ") + e.what());
    }
    if (j.contains("model"))
        cfg.model = model_config_from_json(j["model"]);
    cfg.validate();
    return cfg;
}

json annotation_json(const AnnotationResult& r)
{
    auto by_id = [](const ScoreVector& s) {
        json o = json::object();
        for (const auto& [id, v] : s.entries)
            o[id] = v;
        return o;
    };
    return json{{"format", "delt-annotation/1"},
                {"gamma_star", by_id(r.gamma_star)},
                {"diagnostics",
                 {{"raw_score", by_id(r.raw_scores)},
                  {"learnability", by_id(r.learnability)},
                  {"quality", by_id(r.quality)},
                  {"reliability", r.reliability}}},
                {"config", to_json(r.config)},
                {"trajectory",
                 {{"T", r.config.steps},
                  {"eta", r.config.lm_learning_rate},
                  {"alpha", r.config.score_step},
                  {"outer_iters", r.config.outer_iters},
                  {"seed", r.config.seed},
                  {"proxy_size", r.gamma_star.size()}}}};
}

}  // namespace delt
