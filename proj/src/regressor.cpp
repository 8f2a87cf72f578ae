#include "delt/regressor.hpp"

#include "delt/checkpoint.hpp"
#include "delt/error.hpp"
#include "delt/kernels.hpp"

#include <Eigen/Dense>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace delt {

using json = nlohmann::json;

std::string to_string(FeatureKind kind)
{
    return kind == FeatureKind::embedding ? "embedding" : "embedding_hidden";
}

FeatureKind parse_feature_kind(const std::string& name)
{
    if (name == "embedding")
        return FeatureKind::embedding;
    if (name == "embedding_hidden")
        return FeatureKind::embedding_hidden;
    fail(ErrorKind::domain, "unknown feature kind '" + name + "'");
}

std::size_t FeatureMap::dim() const
{
    const auto d = static_cast<std::size_t>(model.config.embed_dim);
    return kind == FeatureKind::embedding ? d : d + static_cast<std::size_t>(model.config.hidden_dim);
}

FeatureMap FeatureMap::from_params(const ModelParams& params, FeatureKind kind)
{
    if (params.theta.size() != params.config.param_count())
        fail(ErrorKind::shape, "feature map parameters do not match their config");
    return FeatureMap{kind, params};
}

std::vector<double> extract_features(const Sample& sample, const FeatureMap& phi)
{
    const auto d = static_cast<std::size_t>(phi.model.config.embed_dim);
    std::span<const TokenId> body(sample.tokens);
    if (!body.empty() && body.front() == Tokenizer::bos)
        body = body.subspan(1);
    if (body.empty())
        fail(ErrorKind::degenerate_sample, "sample '" + sample.id + "' has no tokens besides BOS");
    std::vector<double> out(d, 0.0);
    for (TokenId t : body) {
        if (t < 0 || t >= phi.model.config.vocab_size)
            fail(ErrorKind::domain, "token id outside the feature table in sample '" + sample.id + "'");
        const auto row = phi.model.embedding_row(t);
        for (std::size_t e = 0; e < d; ++e)
            out[e] += row[e];
    }
    for (double& x : out)
        x /= static_cast<double>(body.size());
    if (phi.kind == FeatureKind::embedding_hidden) {
        TokenSeq seq;
        seq.reserve(body.size() + 1);
        seq.push_back(Tokenizer::bos);
        seq.insert(seq.end(), body.begin(), body.end());
        const auto hidden = mean_hidden_state(phi.model, seq);
        out.insert(out.end(), hidden.begin(), hidden.end());
    }
    return out;
}

std::vector<double> average_ranks(std::span<const double> values)
{
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && values[idx[j + 1]] == values[idx[i]])
            ++j;
        const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k)
            ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

std::optional<double> spearman(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size())
        fail(ErrorKind::domain, "spearman needs equal-length inputs");
    if (a.size() < 2)
        fail(ErrorKind::domain, "spearman needs at least two points");
    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    const double mean = (static_cast<double>(a.size()) + 1.0) / 2.0;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = ra[i] - mean, db = rb[i] - mean;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0)
        return std::nullopt;
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::vector<bool> stratified_validation_mask(std::span<const double> scores, std::uint64_t split_seed)
{
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::mt19937_64 rng(split_seed);
    std::vector<bool> mask(scores.size(), false);
    constexpr std::size_t block = 10;
    for (std::size_t start = 0; start < order.size(); start += block) {
        const std::size_t len = std::min(block, order.size() - start);
        if (len < block / 2)
            break;
        std::uniform_int_distribution<std::size_t> pick(0, len - 1);
        mask[order[start + pick(rng)]] = true;
    }
    return mask;
}

namespace {

std::vector<std::vector<double>> feature_rows(const Corpus& corpus, const FeatureMap& phi)
{
    std::vector<std::vector<double>> rows(corpus.size());
    const auto count = static_cast<std::ptrdiff_t>(corpus.size());
    std::exception_ptr error;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        try {
            rows[static_cast<std::size_t>(i)] = extract_features(corpus[static_cast<std::size_t>(i)], phi);
        } catch (...) {
#pragma omp critical
            if (!error)
                error = std::current_exception();
        }
    }
    if (error)
        std::rethrow_exception(error);
    return rows;
}

}  // namespace

RegressorModel train_regressor(const Corpus& proxy, const ScoreVector& gamma_star, const FeatureMap& phi,
                               const RegressorConfig& cfg)
{
    if (proxy.size() < 10)
        fail(ErrorKind::insufficient_proxy,
             "regressor training needs >= 10 proxy samples, got " + std::to_string(proxy.size()));
    if (cfg.epochs < 1 || !(cfg.learning_rate > 0.0))
        fail(ErrorKind::domain, "regressor needs epochs >= 1 and a positive learning rate");
    const auto targets = gamma_star.aligned(proxy);
    const auto features = feature_rows(proxy, phi);
    const auto mask = stratified_validation_mask(targets, cfg.split_seed);
    const std::size_t d = phi.dim();

    std::vector<std::size_t> train, valid;
    for (std::size_t i = 0; i < proxy.size(); ++i)
        (mask[i] ? valid : train).push_back(i);

    // Fit in whitened feature space against standardized targets; both maps
    // are affine, so the result folds back into (w, b) on raw features.
    const double m = static_cast<double>(train.size());
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
    for (std::size_t i : train)
        mu += Eigen::Map<const Eigen::VectorXd>(features[i].data(), static_cast<Eigen::Index>(d));
    mu /= m;
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (std::size_t i : train) {
        const Eigen::VectorXd c =
            Eigen::Map<const Eigen::VectorXd>(features[i].data(), static_cast<Eigen::Index>(d)) - mu;
        cov += c * c.transpose();
    }
    cov /= m;
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const double top = std::max(eig.eigenvalues().maxCoeff(), 0.0);
    std::vector<Eigen::Index> kept;
    for (Eigen::Index k = 0; k < eig.eigenvalues().size(); ++k)
        if (eig.eigenvalues()[k] > 1e-10 * top && eig.eigenvalues()[k] > 0.0)
            kept.push_back(k);
    Eigen::MatrixXd whiten(static_cast<Eigen::Index>(kept.size()), static_cast<Eigen::Index>(d));
    for (std::size_t r = 0; r < kept.size(); ++r)
        whiten.row(static_cast<Eigen::Index>(r)) =
            eig.eigenvectors().col(kept[r]).transpose() / std::sqrt(eig.eigenvalues()[kept[r]]);
    const std::size_t k = kept.size();

    std::vector<std::vector<double>> z(proxy.size(), std::vector<double>(k));
    for (std::size_t i = 0; i < proxy.size(); ++i) {
        const Eigen::VectorXd zi =
            whiten * (Eigen::Map<const Eigen::VectorXd>(features[i].data(), static_cast<Eigen::Index>(d)) - mu);
        for (std::size_t e = 0; e < k; ++e)
            z[i][e] = zi[static_cast<Eigen::Index>(e)];
    }

    double y_mean = 0.0, y_scale = 0.0;
    for (std::size_t i : train)
        y_mean += targets[i];
    y_mean /= m;
    for (std::size_t i : train)
        y_scale += (targets[i] - y_mean) * (targets[i] - y_mean);
    y_scale = std::sqrt(y_scale / m);
    if (y_scale < 1e-300)
        y_scale = 1.0;
    std::vector<double> y(proxy.size());
    for (std::size_t i = 0; i < proxy.size(); ++i)
        y[i] = (targets[i] - y_mean) / y_scale;

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> init(0.0, 0.01);
    std::vector<double> w(k);
    for (double& x : w)
        x = init(rng);
    double b = 0.0;

    auto predict = [&](std::size_t i) { return dot(w, z[i]) + b; };
    auto train_mse = [&] {
        double s = 0.0;
        for (std::size_t i : train) {
            const double r = predict(i) - y[i];
            s += r * r;
        }
        return s / m * y_scale * y_scale;
    };
    auto valid_spearman = [&]() -> std::optional<double> {
        if (valid.size() < 2)
            return std::nullopt;
        std::vector<double> pred, truth;
        for (std::size_t i : valid) {
            pred.push_back(predict(i));
            truth.push_back(targets[i]);
        }
        return spearman(pred, truth);
    };

    // Lipschitz constant of the MSE gradient in (w, b): largest eigenvalue of
    // (2/m) [Z 1]^T [Z 1], by power iteration.
    double lipschitz = 0.0;
    {
        std::vector<double> v(k + 1, 1.0 / std::sqrt(static_cast<double>(k + 1))), next(k + 1);
        for (int it = 0; it < 100; ++it) {
            std::fill(next.begin(), next.end(), 0.0);
            for (std::size_t i : train) {
                double proj = v[k];
                for (std::size_t e = 0; e < k; ++e)
                    proj += z[i][e] * v[e];
                for (std::size_t e = 0; e < k; ++e)
                    next[e] += 2.0 / m * proj * z[i][e];
                next[k] += 2.0 / m * proj;
            }
            lipschitz = norm2(next);
            if (lipschitz == 0.0)
                break;
            for (std::size_t e = 0; e <= k; ++e)
                v[e] = next[e] / lipschitz;
        }
    }
    const double step = cfg.learning_rate / std::max(lipschitz, 1e-12);

    RegressorModel model;
    model.phi = phi;
    model.config = cfg;
    model.train_size = train.size();
    model.validation_size = valid.size();
    std::vector<double> best_w = w;
    double best_b = b;

    std::vector<double> gw(k);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        model.train_loss_history.push_back(train_mse());
        std::fill(gw.begin(), gw.end(), 0.0);
        double gb = 0.0;
        for (std::size_t i : train) {
            const double r = 2.0 * (predict(i) - y[i]) / m;
            for (std::size_t e = 0; e < k; ++e)
                gw[e] += r * z[i][e];
            gb += r;
        }
        for (std::size_t e = 0; e < k; ++e)
            w[e] -= step * gw[e];
        b -= step * gb;

        const auto rho = valid_spearman();
        if (rho && (!model.best_validation_spearman || *rho > *model.best_validation_spearman)) {
            model.best_validation_spearman = rho;
            model.best_epoch = epoch;
            best_w = w;
            best_b = b;
        }
    }
    model.train_loss_history.push_back(train_mse());
    if (!model.best_validation_spearman) {
        // undefined correlation throughout: keep the final fit
        best_w = w;
        best_b = b;
        model.best_epoch = cfg.epochs - 1;
    }

    const Eigen::VectorXd wz = Eigen::Map<const Eigen::VectorXd>(best_w.data(), static_cast<Eigen::Index>(k));
    const Eigen::VectorXd w_raw = y_scale * (whiten.transpose() * wz);
    model.w.assign(w_raw.data(), w_raw.data() + w_raw.size());
    model.b = y_mean + y_scale * best_b - w_raw.dot(mu);
    return model;
}

ScoreVector predict_scores(const RegressorModel& model, const Corpus& corpus)
{
    const auto rows = feature_rows(corpus, model.phi);
    std::vector<double> scores(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i)
        scores[i] = dot(model.w, rows[i]) + model.b;
    return ScoreVector::from_values(corpus, scores);
}

json regressor_json(const RegressorModel& m)
{
    json meta = {{"best_epoch", m.best_epoch},
                 {"epochs", m.config.epochs},
                 {"learning_rate", m.config.learning_rate},
                 {"seed", m.config.seed},
                 {"split_seed", m.config.split_seed},
                 {"feature_kind", to_string(m.phi.kind)},
                 {"train_size", m.train_size},
                 {"validation_size", m.validation_size},
                 {"final_train_mse", m.train_loss_history.empty() ? 0.0 : m.train_loss_history.back()}};
    meta["best_validation_spearman"] =
        m.best_validation_spearman ? json(*m.best_validation_spearman) : json(nullptr);
    return json{{"format", "delt-regressor/1"},
                {"phi", {{"kind", to_string(m.phi.kind)}, {"checkpoint", checkpoint_json(m.phi.model)}}},
                {"w", m.w},
                {"b", m.b},
                {"metadata", meta}};
}

RegressorModel regressor_from_json(const json& j)
{
    if (!j.is_object() || j.value("format", std::string()) != "delt-regressor/1")
        fail(ErrorKind::format, "not a delt-regressor/1 document");
    RegressorModel m;
    try {
        m.phi.kind = parse_feature_kind(j.at("phi").at("kind").get<std::string>());
        m.phi.model = params_from_checkpoint(j.at("phi").at("checkpoint"));
        m.w = j.at("w").get<std::vector<double>>();
        m.b = j.at("b").get<double>();
        const auto& meta = j.at("metadata");
        m.best_epoch = meta.value("best_epoch", -1);
        if (meta.contains("best_validation_spearman") && meta["best_validation_spearman"].is_number())
            m.best_validation_spearman = meta["best_validation_spearman"].get<double>();
    } catch (const json::exception& e) {
        fail(ErrorKind::format, std::string("bad regressor document: ") + e.what());
    }
    if (m.w.size() != m.phi.dim())
        fail(ErrorKind::shape, "regressor dimensions are inconsistent");
    return m;
}

}  // namespace delt
