#include "delt/harness.hpp"

#include "delt/checkpoint.hpp"
#include "delt/error.hpp"
#include "delt/kernels.hpp"
#include "delt/ngram.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace delt {

using json = nlohmann::json;

void TrainConfig::validate() const
{
    if (epochs < 1)
        fail(ErrorKind::domain, "epochs must be >= 1");
    if (batch_size < 1)
        fail(ErrorKind::domain, "batch size must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
        fail(ErrorKind::domain, "training learning rate must be finite and non-negative");
    model.validate();
}

TrainResult train_lm(const Corpus& ordered, const TrainConfig& cfg)
{
    cfg.validate();
    ModelConfig model = cfg.model;
    model.seed = cfg.seed;
    TrainResult result{init_params(model), {}};
    const auto seqs = token_views(ordered);
    const auto batch = static_cast<std::size_t>(cfg.batch_size);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t start = 0; start < seqs.size(); start += batch) {
            const std::size_t stop = std::min(seqs.size(), start + batch);
            const std::span<const TokenSeq* const> view(seqs.data() + start, stop - start);
            const std::vector<double> weights(view.size(), 1.0 / static_cast<double>(view.size()));
            const auto r = kernels::omp::weighted_loss_and_gradient(result.params, view, weights);
            const auto index = result.batch_losses.size();
            if (!std::isfinite(r.loss) ||
                !std::all_of(r.grad.begin(), r.grad.end(), [](double g) { return std::isfinite(g); }))
                fail(ErrorKind::divergence, "training diverged at batch " + std::to_string(index));
            result.batch_losses.push_back(r.loss);
            for (std::size_t i = 0; i < r.grad.size(); ++i)
                result.params.theta[i] -= cfg.learning_rate * r.grad[i];
        }
    }
    return result;
}

double evaluate(const ModelParams& params, const Corpus& eval) { return downstream_loss(params, eval); }

std::string to_string(ScorerKind kind)
{
    switch (kind) {
    case ScorerKind::kenlm: return "kenlm";
    case ScorerKind::pds: return "pds";
    case ScorerKind::lqs: return "lqs";
    case ScorerKind::external: return "external";
    }
    return "unknown";
}

ScorerKind parse_scorer(const std::string& name)
{
    if (name == "kenlm")
        return ScorerKind::kenlm;
    if (name == "pds")
        return ScorerKind::pds;
    if (name == "lqs")
        return ScorerKind::lqs;
    if (name == "external" || name == "external-file")
        return ScorerKind::external;
    fail(ErrorKind::domain, "unknown scorer '" + name + "'");
}

ScoreVector score_corpus(const Corpus& corpus, const Corpus* eval, const ScoringConfig& cfg, std::uint64_t seed)
{
    switch (cfg.kind) {
    case ScorerKind::kenlm: return kenlm_score(corpus, fit_ngram(corpus, cfg.ngram_order, cfg.ngram_smoothing));
    case ScorerKind::external: {
        auto scores = read_scores(cfg.scores_path);
        scores.aligned(corpus);
        return scores;
    }
    case ScorerKind::pds:
    case ScorerKind::lqs: break;
    }
    if (!eval)
        fail(ErrorKind::empty_eval, to_string(cfg.kind) + " scoring needs an evaluation corpus");

    const bool direct = cfg.proxy_size == 0 || cfg.proxy_size >= corpus.size();
    std::optional<Corpus> sampled;
    if (!direct) {
        auto idx = shuffle_permutation(corpus.size(), seed);
        idx.resize(cfg.proxy_size);
        std::sort(idx.begin(), idx.end());
        sampled.emplace(corpus.reordered(idx, "proxy sample n=" + std::to_string(cfg.proxy_size)));
    }
    const Corpus& proxy = direct ? corpus : *sampled;

    AnnotationConfig acfg = cfg.annotation;
    acfg.seed = seed;
    const auto result = annotate_proxy(proxy, *eval, acfg);
    const ScoreVector& proxy_scores = cfg.kind == ScorerKind::pds ? result.quality : result.gamma_star;
    if (direct)
        return proxy_scores;

    RegressorConfig rcfg = cfg.regressor;
    rcfg.seed = seed;
    rcfg.split_seed = seed;
    const auto model = train_regressor(proxy, proxy_scores, FeatureMap::from_params(result.final_params), rcfg);
    return predict_scores(model, corpus);
}

void ExperimentSpec::validate() const
{
    if (orderings.empty())
        fail(ErrorKind::domain, "experiment needs at least one ordering");
    if (seeds.empty())
        fail(ErrorKind::domain, "experiment needs at least one seed");
    if (selection_ratio && !(*selection_ratio > 0.0 && *selection_ratio <= 1.0))
        fail(ErrorKind::domain, "selection ratio must lie in (0, 1]");
    for (const auto& o : orderings)
        if (o.layers < 1)
            fail(ErrorKind::domain, "fold layers must be >= 1");
    train.validate();
}

ExperimentReport run_experiment(const ExperimentSpec& spec)
{
    const auto corpus = load_jsonl(spec.corpus_path);
    const auto eval = load_jsonl(spec.eval_path);
    return run_experiment(spec, corpus, eval);
}

ExperimentReport run_experiment(const ExperimentSpec& spec, const Corpus& corpus, const Corpus& eval)
{
    spec.validate();
    ExperimentReport report;
    for (std::uint64_t seed : spec.seeds) {
        std::optional<ScoreVector> scores;
        std::string scoring_error;
        try {
            scores = score_corpus(corpus, &eval, spec.scoring, seed);
        } catch (const std::exception& e) {
            scoring_error = std::string("scoring: ") + e.what();
        }
        for (const auto& ord : spec.orderings) {
            ExperimentRow row;
            row.ordering = ord.label();
            row.seed = seed;
            const auto t0 = std::chrono::steady_clock::now();
            if (!scores) {
                row.error = scoring_error;
                row.final_loss = std::nan("");
            } else {
                try {
                    std::optional<SelectionConfig> sel;
                    if (spec.selection_ratio)
                        sel = SelectionConfig{*spec.selection_ratio};
                    OrderingConfig o = ord;
                    if (!o.seed)
                        o.seed = seed;
                    const Corpus ordered = compose(corpus, *scores, sel, o);
                    TrainConfig tcfg = spec.train;
                    tcfg.seed = seed;
                    auto trained = train_lm(ordered, tcfg);
                    row.curve = std::move(trained.batch_losses);
                    row.final_loss = evaluate(trained.params, eval);
                } catch (const std::exception& e) {
                    row.error = row.ordering + " seed " + std::to_string(seed) + ": " + e.what();
                    row.final_loss = std::nan("");
                }
            }
            row.wall_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            report.rows.push_back(std::move(row));
        }
    }
    summarize(report);
    return report;
}

void summarize(ExperimentReport& report)
{
    report.summaries.clear();
    report.wins.clear();
    std::vector<std::string> labels;
    for (const auto& r : report.rows)
        if (std::find(labels.begin(), labels.end(), r.ordering) == labels.end())
            labels.push_back(r.ordering);

    for (const auto& label : labels) {
        OrderingSummary s;
        s.ordering = label;
        double sum = 0.0;
        for (const auto& r : report.rows)
            if (r.ordering == label && r.ok()) {
                sum += r.final_loss;
                ++s.runs;
            }
        if (s.runs > 0)
            s.mean = sum / static_cast<double>(s.runs);
        double sq = 0.0;
        for (const auto& r : report.rows)
            if (r.ordering == label && r.ok())
                sq += (r.final_loss - s.mean) * (r.final_loss - s.mean);
        s.stddev = s.runs > 1 ? std::sqrt(sq / static_cast<double>(s.runs - 1)) : 0.0;
        report.summaries.push_back(s);
    }

    for (const auto& a : labels)
        for (const auto& b : labels) {
            if (a == b)
                continue;
            int count = 0;
            for (const auto& ra : report.rows) {
                if (ra.ordering != a || !ra.ok())
                    continue;
                for (const auto& rb : report.rows)
                    if (rb.ordering == b && rb.seed == ra.seed && rb.ok() && ra.final_loss < rb.final_loss)
                        ++count;
            }
            report.wins[a][b] = count;
        }
}

double sign_test_p(int wins, int losses)
{
    const int n = wins + losses;
    if (n == 0)
        return 1.0;
    // log-space binomial tail
    double p = 0.0;
    for (int k = wins; k <= n; ++k)
        p += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) - n * std::log(2.0));
    return std::min(1.0, p);
}

namespace {

std::string fmt(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fixed(double v, int prec)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    return buf;
}

std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"')
            out += '"';
        out += c == '\n' ? ' ' : c;
    }
    return out + "\"";
}

void write_text(const std::filesystem::path& path, const std::string& content)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        fail(ErrorKind::io, "cannot write " + path.string());
    out << content;
    if (!out)
        fail(ErrorKind::io, "write failed for " + path.string());
}

}  // namespace

void write_report(const ExperimentReport& report, const std::filesystem::path& dir, bool with_timing)
{
    if (report.rows.empty())
        fail(ErrorKind::domain, "cannot write an empty report");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        fail(ErrorKind::io, "cannot create " + dir.string() + ": " + ec.message());

    std::ostringstream rows;
    rows << "ordering,seed,final_loss,batches,status\n";
    for (const auto& r : report.rows)
        rows << csv_field(r.ordering) << ',' << r.seed << ',' << (r.ok() ? fmt(r.final_loss) : "nan") << ','
             << r.curve.size() << ',' << (r.ok() ? "ok" : csv_field(r.error)) << '\n';
    write_text(dir / "rows.csv", rows.str());

    std::ostringstream curves;
    curves << "ordering,seed,batch,loss\n";
    for (const auto& r : report.rows)
        for (std::size_t i = 0; i < r.curve.size(); ++i)
            curves << csv_field(r.ordering) << ',' << r.seed << ',' << i << ',' << fmt(r.curve[i]) << '\n';
    write_text(dir / "curves.csv", curves.str());

    std::size_t width = 8;
    for (const auto& s : report.summaries)
        width = std::max(width, s.ordering.size());
    std::ostringstream summary;
    auto pad = [&](const std::string& s) { return s + std::string(width - s.size(), ' '); };
    summary << pad("ordering") << "  runs  held-out loss (mean +- std)\n";
    summary << std::string(width, '-') << "  ----  ---------------------------\n";
    for (const auto& s : report.summaries)
        summary << pad(s.ordering) << "  " << std::string(4 - std::min<std::size_t>(4, std::to_string(s.runs).size()), ' ')
                << s.runs << "  " << fixed(s.mean, 6) << " +- " << fixed(s.stddev, 6) << '\n';
    summary << "\npairwise wins (row beats column: lower held-out loss on the same seed)\n";
    summary << pad("");
    for (const auto& s : report.summaries)
        summary << "  " << s.ordering;
    summary << '\n';
    for (const auto& a : report.summaries) {
        summary << pad(a.ordering);
        for (const auto& b : report.summaries) {
            const std::string cell = a.ordering == b.ordering ? "-" : std::to_string(report.wins.at(a.ordering).at(b.ordering));
            summary << "  " << std::string(b.ordering.size() - std::min(b.ordering.size(), cell.size()), ' ') << cell;
        }
        summary << '\n';
    }
    std::size_t failures = 0;
    for (const auto& r : report.rows)
        failures += r.ok() ? 0 : 1;
    if (failures > 0)
        summary << "\nfailed runs: " << failures << '\n';
    write_text(dir / "summary.txt", summary.str());

    if (with_timing) {
        std::ostringstream timing;
        timing << "ordering,seed,wall_seconds\n";
        for (const auto& r : report.rows)
            timing << csv_field(r.ordering) << ',' << r.seed << ',' << fixed(r.wall_seconds, 3) << '\n';
        write_text(dir / "timing.csv", timing.str());
    }
}

json to_json(const TrainConfig& cfg)
{
    return json{{"epochs", cfg.epochs},
                {"batch_size", cfg.batch_size},
                {"learning_rate", cfg.learning_rate},
                {"seed", cfg.seed},
                {"model", to_json(cfg.model)}};
}

TrainConfig train_config_from_json(const json& j)
{
    TrainConfig cfg;
    try {
        cfg.epochs = j.value("epochs", cfg.epochs);
        cfg.batch_size = j.value("batch_size", cfg.batch_size);
        cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
        cfg.seed = j.value("seed", cfg.seed);
    } catch (const json::exception& e) {
        fail(ErrorKind::format, std::string("bad train config: ") + e.what());
    }
    if (j.contains("model"))
        cfg.model = model_config_from_json(j["model"]);
    cfg.validate();
    return cfg;
}

json to_json(const ExperimentSpec& spec)
{
    json orderings = json::array();
    for (const auto& o : spec.orderings)
        orderings.push_back(to_json(o));
    json scoring = {{"scorer", to_string(spec.scoring.kind)},
                    {"scores_path", spec.scoring.scores_path},
                    {"ngram_order", spec.scoring.ngram_order},
                    {"ngram_smoothing", spec.scoring.ngram_smoothing},
                    {"annotation", to_json(spec.scoring.annotation)},
                    {"proxy_size", spec.scoring.proxy_size},
                    {"regressor",
                     {{"epochs", spec.scoring.regressor.epochs},
                      {"learning_rate", spec.scoring.regressor.learning_rate}}}};
    json j = {{"corpus", spec.corpus_path},
              {"eval", spec.eval_path},
              {"scoring", scoring},
              {"orderings", orderings},
              {"seeds", spec.seeds},
              {"train", to_json(spec.train)}};
    j["selection_ratio"] = spec.selection_ratio ? json(*spec.selection_ratio) : json(nullptr);
    return j;
}

ExperimentSpec experiment_spec_from_json(const json& j)
{
    ExperimentSpec spec;
    try {
        spec.corpus_path = j.at("corpus").get<std::string>();
        spec.eval_path = j.at("eval").get<std::string>();
        if (j.contains("scoring")) {
            const auto& s = j["scoring"];
            spec.scoring.kind = parse_scorer(s.value("scorer", std::string("lqs")));
            spec.scoring.scores_path = s.value("scores_path", std::string());
            spec.scoring.ngram_order = s.value("ngram_order", spec.scoring.ngram_order);
            spec.scoring.ngram_smoothing = s.value("ngram_smoothing", spec.scoring.ngram_smoothing);
            spec.scoring.proxy_size = s.value("proxy_size", spec.scoring.proxy_size);
            if (s.contains("annotation"))
                spec.scoring.annotation = annotation_config_from_json(s["annotation"]);
            if (s.contains("regressor")) {
                spec.scoring.regressor.epochs = s["regressor"].value("epochs", spec.scoring.regressor.epochs);
                spec.scoring.regressor.learning_rate =
                    s["regressor"].value("learning_rate", spec.scoring.regressor.learning_rate);
            }
        }
        if (j.contains("selection_ratio") && !j["selection_ratio"].is_null())
            spec.selection_ratio = j["selection_ratio"].get<double>();
        for (const auto& o : j.at("orderings"))
            spec.orderings.push_back(ordering_config_from_json(o));
        spec.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        if (j.contains("train"))
            spec.train = train_config_from_json(j["train"]);
    } catch (const json::exception& e) {
        fail(ErrorKind::format, std::string("bad experiment spec: ") + e.what());
    }
    spec.validate();
    return spec;
}

std::string spec_hash(const ExperimentSpec& spec)
{
    const auto text = to_json(spec).dump();
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace delt
