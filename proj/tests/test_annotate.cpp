#include "delt/annotate.hpp"
#include "delt/error.hpp"
#include "delt/synth.hpp"
#include "oracles.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>

using namespace delt;

namespace {

ModelConfig tiny_model() { return oracle::small_config(0, 3, 4, 6); }

Corpus small_proxy()
{
    return testing::make_corpus({"the cat sat on the mat", "a dog ran", "qz#k!x", "the cat ran", "mat cat hat"}, "p");
}

Corpus small_eval() { return testing::make_corpus({"the cat sat", "the dog sat on the mat"}, "e"); }

ScoreVector uniform(const Corpus& c)
{
    return ScoreVector::from_values(c, std::vector<double>(c.size(), 1.0 / static_cast<double>(c.size())));
}

AnnotationConfig tiny_config(std::uint64_t seed, int steps = 4)
{
    AnnotationConfig cfg;
    cfg.steps = steps;
    cfg.seed = seed;
    cfg.model = tiny_model();
    return cfg;
}

std::vector<double> combine(const std::vector<double>& a, double s, const std::vector<double>& b)
{
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        out[i] = a[i] + s * b[i];
    return out;
}

// summand = reliability * quality * learnability for every (n, t)
double worst_identity_error(const StepStatistics& stats)
{
    double worst = 0.0;
    for (std::size_t n = 0; n < stats.samples(); ++n)
        for (int t = 1; t < stats.steps(); ++t) {
            const auto term = lqs_term(stats, n, t);
            const double product = term.reliability * term.quality * term.learnability;
            worst = std::max(worst, testing::rel_err(term.summand, product, 1e-300));
        }
    return worst;
}

bool on_simplex(const std::vector<double>& v)
{
    double s = 0.0;
    for (double x : v) {
        if (x < 0.0)
            return false;
        s += x;
    }
    return std::abs(s - 1.0) <= 1e-9;
}

std::vector<std::size_t> argsort(const std::vector<double>& v)
{
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    return idx;
}

StepStatistics synthetic_stats(std::size_t samples, int steps, double norm_ratio)
{
    StepStatistics s;
    s.grad_norms.assign(samples, std::vector<double>(steps));
    s.target_dots.assign(samples, std::vector<double>(steps - 1, 0.0));
    s.target_norms.assign(steps - 1, 1.0);
    for (auto& row : s.grad_norms)
        for (int t = 0; t < steps; ++t)
            row[t] = std::pow(norm_ratio, t) * 3.0;
    return s;
}

}  // namespace

TEST_CASE("simplex projection examples")
{
    CHECK(project_simplex(std::vector<double>{2, 0, 0}) == std::vector<double>{1, 0, 0});
    for (double x : project_simplex(std::vector<double>{0.5, 0.5, 0.5}))
        CHECK(x == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    const std::vector<double> on{0.1, 0.6, 0.3};
    const auto p = project_simplex(on);
    for (int i = 0; i < 3; ++i)
        CHECK(p[i] == doctest::Approx(on[i]).epsilon(1e-15));
}

TEST_CASE("simplex projection properties")
{
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + trial % 30;
        const auto v = testing::random_vector(rng, n, 1.0 + trial % 7);
        const auto p = project_simplex(v);
        REQUIRE(on_simplex(p));
        const auto pp = project_simplex(p);
        for (std::size_t i = 0; i < n; ++i)
            CHECK(std::abs(pp[i] - p[i]) <= 1e-12);
        // optimality: p = max(v - tau, 0) for one threshold tau
        double tau = 0.0;
        bool found = false;
        for (std::size_t i = 0; i < n; ++i)
            if (p[i] > 0.0) {
                tau = v[i] - p[i];
                found = true;
                break;
            }
        REQUIRE(found);
        for (std::size_t i = 0; i < n; ++i)
            CHECK(p[i] == doctest::Approx(std::max(v[i] - tau, 0.0)).epsilon(1e-9).scale(1e-9));
    }
    CHECK_THROWS_AS(project_simplex(std::vector<double>{1.0, std::nan("")}), Error);
}

TEST_CASE("forward trajectory")
{
    const auto proxy = small_proxy();
    const auto theta0 = init_params(tiny_model());

    SUBCASE("zero learning rate keeps theta0")
    {
        const auto traj = forward_trajectory(theta0, proxy, uniform(proxy), 3, 0.0);
        REQUIRE(traj.checkpoints.size() == 4);
        for (const auto& cp : traj.checkpoints)
            CHECK(cp.theta == theta0.theta);
    }
    SUBCASE("one-hot weights follow a single sample")
    {
        std::vector<double> w(proxy.size(), 0.0);
        w[2] = 1.0;
        const auto traj = forward_trajectory(theta0, proxy, ScoreVector::from_values(proxy, w), 2, 0.3);
        auto p = theta0;
        for (int t = 0; t < 2; ++t) {
            p = sgd_step(p, sample_gradient(p, proxy[2].tokens), 0.3);
            for (std::size_t i = 0; i < p.theta.size(); ++i)
                CHECK(traj.checkpoints[t + 1].theta[i] == doctest::Approx(p.theta[i]).epsilon(1e-13));
        }
    }
    SUBCASE("hand-driven oracle on three samples")
    {
        const auto three = testing::make_corpus({"abc", "cab", "bca!"});
        const std::vector<double> w{0.5, 0.2, 0.3};
        const auto traj = forward_trajectory(theta0, three, ScoreVector::from_values(three, w), 3, 0.4);
        auto p = theta0;
        for (int t = 0; t < 3; ++t) {
            Gradient g{std::vector<double>(p.theta.size(), 0.0)};
            for (std::size_t n = 0; n < 3; ++n) {
                const auto gn = sample_gradient(p, three[n].tokens);
                for (std::size_t i = 0; i < g.vec.size(); ++i)
                    g.vec[i] += w[n] * gn.vec[i];
            }
            p = sgd_step(p, g, 0.4);
            for (std::size_t i = 0; i < p.theta.size(); ++i)
                CHECK(traj.checkpoints[t + 1].theta[i] == doctest::Approx(p.theta[i]).epsilon(1e-12));
        }
    }
    SUBCASE("T < 2 and bad weights")
    {
        CHECK_THROWS_AS(forward_trajectory(theta0, proxy, uniform(proxy), 1, 0.1), Error);
        std::vector<double> w(proxy.size(), 0.25);
        w[0] = -0.1;
        CHECK_THROWS_AS(forward_trajectory(theta0, proxy, ScoreVector::from_values(proxy, w), 2, 0.1), Error);
    }
}

TEST_CASE("divergence names the step")
{
    GradientFn blowup = [](std::span<const double> th) {
        std::vector<double> g(th.begin(), th.end());
        for (double& x : g)
            x = x * 1e200;
        return g;
    };
    try {
        forward_recursion(std::vector<double>{1.0, 2.0}, 5, 1e200, blowup);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::divergence);
        CHECK(std::string(e.what()).find("forward step") != std::string::npos);
    }
}

TEST_CASE("annotation errors carry their phase")
{
    auto cfg = tiny_config(0);
    cfg.lm_learning_rate = 1e300;
    try {
        annotate_proxy(small_proxy(), small_eval(), cfg);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::divergence);
        CHECK(std::string(e.what()).find("phase") != std::string::npos);
    }
}

TEST_CASE("zero learning rate collapses the target recursion exactly")
{
    const auto proxy = small_proxy();
    const auto eval = small_eval();
    for (std::uint64_t seed : {0u, 1u}) {
        auto model = tiny_model();
        model.seed = seed;
        const auto theta0 = init_params(model);
        const int T = 5;
        // a real trajectory, with targets recomputed under eta = 0
        auto traj = forward_trajectory(theta0, proxy, uniform(proxy), T, 0.3);
        traj.eta = 0.0;
        const auto targets = reverse_target_vectors(traj, proxy, uniform(proxy), eval);
        REQUIRE(targets.lambdas.size() == T);
        std::vector<double> acc = downstream_gradient(traj.checkpoints[T], eval).vec;
        CHECK(targets.at(T) == acc);
        for (int t = T - 1; t >= 1; --t) {
            const auto g = downstream_gradient(traj.checkpoints[t], eval).vec;
            for (std::size_t i = 0; i < acc.size(); ++i)
                acc[i] = acc[i] + g[i];
            CHECK(targets.at(t) == acc);
        }
    }
}

TEST_CASE("target recursion on quadratic objectives")
{
    std::mt19937_64 rng(77);
    const std::size_t n = 6;
    auto sym = [&](double scale) {
        std::vector<double> M(n * n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j <= i; ++j)
                M[i * n + j] = M[j * n + i] = std::normal_distribution<double>(0.0, scale)(rng);
        return M;
    };
    const auto A = sym(0.3), B = sym(1.0);
    const auto a = testing::random_vector(rng, n), b = testing::random_vector(rng, n);
    auto affine = [n](const std::vector<double>& M, const std::vector<double>& c) {
        return GradientFn([&M, &c, n](std::span<const double> th) {
            std::vector<double> g = c;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    g[i] += M[i * n + j] * th[j];
            return g;
        });
    };
    auto matvec = [n](const std::vector<double>& M, const std::vector<double>& v) {
        std::vector<double> out(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                out[i] += M[i * n + j] * v[j];
        return out;
    };
    const GradientFn train = affine(A, a), down = affine(B, b);
    const double eta = 0.2;
    const int T = 6;
    const auto theta0 = testing::random_vector(rng, n);
    const auto thetas = forward_recursion(theta0, T, eta, train);

    // closed form: theta_{t+1} = theta_t - eta (A theta_t + a)
    auto th = theta0;
    for (int t = 1; t <= T; ++t) {
        th = combine(th, -eta, combine(matvec(A, th), 1.0, a));
        for (std::size_t i = 0; i < n; ++i)
            CHECK(thetas[t][i] == doctest::Approx(th[i]).epsilon(1e-12));
    }

    const auto lambdas = reverse_recursion(thetas, eta, down, train);
    std::vector<double> lam = combine(matvec(B, thetas[T]), 1.0, b);
    for (int t = T; t >= 1; --t) {
        if (t < T)
            lam = combine(combine(lam, 1.0, combine(matvec(B, thetas[t]), 1.0, b)), -eta, matvec(A, lam));
        std::vector<double> diff = combine(lambdas[t - 1], -1.0, lam);
        CHECK(norm2(diff) <= 1e-6 * norm2(lam));
    }
}

TEST_CASE("smallest trajectory: T = 2")
{
    const auto proxy = small_proxy();
    const auto eval = small_eval();
    const auto traj = forward_trajectory(init_params(tiny_model()), proxy, uniform(proxy), 2, 0.5);
    const auto targets = reverse_target_vectors(traj, proxy, uniform(proxy), eval);
    REQUIRE(targets.lambdas.size() == 2);
    CHECK(targets.at(2) == downstream_gradient(traj.checkpoints[2], eval).vec);
    const auto h = hvp(traj.checkpoints[1], proxy, uniform(proxy), targets.at(2));
    const auto g1 = downstream_gradient(traj.checkpoints[1], eval).vec;
    for (std::size_t i = 0; i < g1.size(); ++i)
        CHECK(targets.at(1)[i] == doctest::Approx(targets.at(2)[i] + g1[i] - 0.5 * h[i]).epsilon(1e-12).scale(1e-12));
}

TEST_CASE("score formulas on constructed statistics")
{
    const int T = 6;
    SUBCASE("constant norms give T - 1")
    {
        for (double l : learnability_from(synthetic_stats(3, T, 1.0)))
            CHECK(l == doctest::Approx(T - 1));
    }
    SUBCASE("halving norms give 2 (T - 1)")
    {
        for (double l : learnability_from(synthetic_stats(3, T, 0.5)))
            CHECK(l == doctest::Approx(2.0 * (T - 1)));
    }
    SUBCASE("parallel, antiparallel, orthogonal")
    {
        auto s = synthetic_stats(3, T, 0.8);
        for (int t = 0; t < T - 1; ++t) {
            s.target_dots[0][t] = s.target_norms[t] * s.grad_norms[0][t];
            s.target_dots[1][t] = -s.target_norms[t] * s.grad_norms[1][t];
            s.target_dots[2][t] = 0.0;
        }
        const auto q = quality_from(s);
        CHECK(q[0] == doctest::Approx(T - 1));
        CHECK(q[1] == doctest::Approx(-(T - 1)));
        CHECK(q[2] == 0.0);
    }
    SUBCASE("zero targets give zero scores")
    {
        auto s = synthetic_stats(4, T, 0.7);
        std::fill(s.target_norms.begin(), s.target_norms.end(), 0.0);
        for (double g : lqs_from(s))
            CHECK(g == 0.0);
        for (double q : quality_from(s))
            CHECK(q == 0.0);
    }
    SUBCASE("zero gradients stay finite")
    {
        auto s = synthetic_stats(2, T, 1.0);
        for (auto& row : s.grad_norms)
            std::fill(row.begin(), row.end(), 0.0);
        for (double l : learnability_from(s))
            CHECK(l == 0.0);
        for (double q : quality_from(s))
            CHECK(q == 0.0);
    }
}

TEST_CASE("scores on a real trajectory match brute-force recomputation")
{
    const auto proxy = small_proxy();
    const auto eval = small_eval();
    const int T = 4;
    const auto traj = forward_trajectory(init_params(tiny_model()), proxy, uniform(proxy), T, 0.5);
    const auto targets = reverse_target_vectors(traj, proxy, uniform(proxy), eval);
    const auto lqs = lqs_scores(traj, targets, proxy).aligned(proxy);
    const auto qual = quality_scores(traj, targets, proxy).aligned(proxy);
    const auto pds = pds_scores(traj, targets, proxy).aligned(proxy);
    const auto learn = learnability_scores(traj, proxy).aligned(proxy);
    CHECK(pds == qual);

    for (std::size_t n = 0; n < proxy.size(); ++n) {
        double l = 0.0, q = 0.0, g = 0.0;
        for (int t = 1; t < T; ++t) {
            const auto gt = sample_gradient(traj.checkpoints[t], proxy[n].tokens).vec;
            const auto gn = sample_gradient(traj.checkpoints[t + 1], proxy[n].tokens).vec;
            const auto& lam = targets.at(t + 1);
            const double next = std::max(norm2(gn), norm_epsilon);
            l += norm2(gt) / next;
            q += dot(lam, gt) / (norm2(lam) * norm2(gt));
            g += dot(lam, gt) / next;
        }
        CHECK(testing::rel_err(learn[n], l) < 1e-9);
        CHECK(testing::rel_err(qual[n], q) < 1e-9);
        CHECK(testing::rel_err(lqs[n], g) < 1e-9);
    }
    CHECK(worst_identity_error(step_statistics(traj, &targets, proxy)) < 1e-9);
}

TEST_CASE("annotate_proxy")
{
    const auto proxy = small_proxy();
    const auto eval = small_eval();

    SUBCASE("output is on the simplex and the identity holds")
    {
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            const auto r = annotate_proxy(proxy, eval, tiny_config(seed));
            CHECK(on_simplex(r.gamma_star.aligned(proxy)));
            CHECK(worst_identity_error(r.stats) < 1e-9);
            CHECK(r.reliability.size() == 3);
        }
    }
    SUBCASE("alpha = 0 keeps the uniform vector")
    {
        auto cfg = tiny_config(1);
        cfg.score_step = 0.0;
        const auto r = annotate_proxy(proxy, eval, cfg);
        for (double g : r.gamma_star.aligned(proxy))
            CHECK(g == doctest::Approx(0.2).epsilon(1e-15));
    }
    SUBCASE("a single proxy sample gets all the mass")
    {
        const auto one = testing::make_corpus({"lonely sample"});
        for (double alpha : {0.0, 1e-4, 10.0}) {
            auto cfg = tiny_config(2);
            cfg.score_step = alpha;
            CHECK(annotate_proxy(one, eval, cfg).gamma_star.aligned(one) == std::vector<double>{1.0});
        }
    }
    SUBCASE("rank is independent of small alpha")
    {
        auto lo = tiny_config(3), hi = tiny_config(3);
        lo.score_step = 1e-6;
        hi.score_step = 1e-4;
        const auto a = annotate_proxy(proxy, eval, lo);
        const auto b = annotate_proxy(proxy, eval, hi);
        CHECK(argsort(a.gamma_star.aligned(proxy)) == argsort(b.gamma_star.aligned(proxy)));
        for (double g : b.gamma_star.aligned(proxy))
            CHECK(g > 0.0);
    }
    SUBCASE("permuting the proxy permutes gamma*")
    {
        const std::vector<std::size_t> perm{3, 0, 4, 2, 1};
        const auto shuffled = proxy.reordered(perm, "perm");
        const auto a = annotate_proxy(proxy, eval, tiny_config(4)).gamma_star.aligned(proxy);
        const auto b = annotate_proxy(shuffled, eval, tiny_config(4)).gamma_star.aligned(shuffled);
        for (std::size_t i = 0; i < perm.size(); ++i)
            CHECK(b[i] == doctest::Approx(a[perm[i]]).epsilon(1e-10));
    }
    SUBCASE("repeat count")
    {
        auto cfg = tiny_config(5);
        cfg.outer_iters = 3;
        cfg.score_step = 1e-3;
        const auto r = annotate_proxy(proxy, eval, cfg);
        CHECK(on_simplex(r.gamma_star.aligned(proxy)));
        CHECK(worst_identity_error(r.stats) < 1e-9);
    }
    SUBCASE("invalid configs")
    {
        auto cfg = tiny_config(0, 1);
        CHECK_THROWS_AS(annotate_proxy(proxy, eval, cfg), Error);
        cfg = tiny_config(0);
        cfg.score_step = -1.0;
        CHECK_THROWS_AS(annotate_proxy(proxy, eval, cfg), Error);
    }
}

TEST_CASE("a noise sample gets the smallest weight")
{
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        std::vector<std::string> texts;
        for (std::uint64_t i = 0; i < 4; ++i)
            texts.push_back(clean_text(seed * 100 + i, 48, 96));
        const std::size_t noise_at = seed % 5;
        texts.insert(texts.begin() + static_cast<long>(noise_at), noise_text(seed * 100 + 50, 48, 96));
        std::vector<std::string> eval_texts;
        for (std::uint64_t i = 0; i < 8; ++i)
            eval_texts.push_back(clean_text(seed * 100 + 60 + i, 48, 96));
        const auto proxy = testing::make_corpus(texts, "p");
        const auto eval = testing::make_corpus(eval_texts, "e");
        AnnotationConfig cfg;
        cfg.seed = seed;
        const auto r = annotate_proxy(proxy, eval, cfg);
        const auto g = r.gamma_star.aligned(proxy);
        CHECK(worst_identity_error(r.stats) < 1e-9);
        hits += std::min_element(g.begin(), g.end()) - g.begin() == static_cast<long>(noise_at);
    }
    CHECK(hits >= 8);
}

TEST_CASE("annotation json")
{
    const auto proxy = small_proxy();
    const auto cfg = tiny_config(6);
    const auto r = annotate_proxy(proxy, small_eval(), cfg);
    const auto j = annotation_json(r);
    CHECK(j["format"] == "delt-annotation/1");
    CHECK(j["gamma_star"].size() == proxy.size());
    CHECK(j["diagnostics"]["learnability"].size() == proxy.size());
    CHECK(j["diagnostics"]["reliability"].size() == 3);
    CHECK(j["trajectory"]["T"] == 4);
    const auto back = annotation_config_from_json(j["config"]);
    CHECK(back.steps == cfg.steps);
    CHECK(back.model == cfg.model);
}
