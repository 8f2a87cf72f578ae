// delt: score, select, order and train on text corpora from the command line.
// Stages exchange files only; every random choice comes from a --seed flag.

#include "delt/annotate.hpp"
#include "delt/checkpoint.hpp"
#include "delt/corpus.hpp"
#include "delt/error.hpp"
#include "delt/harness.hpp"
#include "delt/ngram.hpp"
#include "delt/pipeline.hpp"
#include "delt/regressor.hpp"
#include "delt/synth.hpp"
#include "delt/tinylm.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <unordered_map>
#include <vector>

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config;
    int threads = 0;
};

struct ModelFlags {
    int context = 8;
    int embed = 16;
    int hidden = 32;
    bool sum_loss = false;

    delt::ModelConfig make(std::uint64_t seed) const
    {
        delt::ModelConfig m;
        m.context_window = context;
        m.embed_dim = embed;
        m.hidden_dim = hidden;
        m.seed = seed;
        m.reduction = sum_loss ? delt::LossReduction::sum : delt::LossReduction::mean;
        return m;
    }
};

void add_common(CLI::App* sub, Common& c)
{
    sub->add_option("--config", c.config, "JSON file of flag values; explicit flags win")->check(CLI::ExistingFile);
    sub->add_option("--threads", c.threads, "worker thread cap (0 = runtime default)")->check(CLI::NonNegativeNumber);
}

void add_model(CLI::App* sub, ModelFlags& m)
{
    sub->add_option("--context", m.context, "model context window")->check(CLI::PositiveNumber);
    sub->add_option("--embed-dim", m.embed, "embedding width")->check(CLI::PositiveNumber);
    sub->add_option("--hidden-dim", m.hidden, "hidden layer width")->check(CLI::PositiveNumber);
    sub->add_flag("--sum-loss", m.sum_loss, "sum token losses per sample instead of averaging");
}

struct AnnotateFlags {
    int steps = 12;
    double lr = 0.5;
    double alpha = 1e-4;
    int outer = 1;
};

void add_annotation(CLI::App* sub, AnnotateFlags& a)
{
    sub->add_option("--steps", a.steps, "proxy training steps T")->check(CLI::Range(2, 1 << 20));
    sub->add_option("--lm-lr", a.lr, "proxy learning rate")->check(CLI::NonNegativeNumber);
    sub->add_option("--alpha", a.alpha, "score update step")->check(CLI::NonNegativeNumber);
    sub->add_option("--outer-iters", a.outer, "annotation passes")->check(CLI::PositiveNumber);
}

delt::AnnotationConfig annotation_config(const AnnotateFlags& a, const ModelFlags& m, std::uint64_t seed)
{
    delt::AnnotationConfig cfg;
    cfg.steps = a.steps;
    cfg.lm_learning_rate = a.lr;
    cfg.score_step = a.alpha;
    cfg.outer_iters = a.outer;
    cfg.seed = seed;
    cfg.model = m.make(seed);
    return cfg;
}

// Injects config-file values as flags unless the command line already has them.
std::vector<std::string> merge_config(std::vector<std::string> args)
{
    std::string path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size())
            path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0)
            path = args[i].substr(9);
    }
    if (path.empty() || !fs::exists(path))
        return args;  // CLI11 reports the missing file

    const json cfg = delt::read_json_file(path);
    if (!cfg.is_object())
        delt::fail(delt::ErrorKind::format, "config file " + path + " must hold a JSON object");
    for (const auto& [key, value] : cfg.items()) {
        const std::string flag = "--" + key;
        bool present = false;
        for (const auto& a : args)
            present = present || a == flag || a.rfind(flag + "=", 0) == 0;
        if (present)
            continue;
        if (value.is_boolean()) {
            if (value.get<bool>())
                args.push_back(flag);
        } else if (value.is_string()) {
            args.push_back(flag);
            args.push_back(value.get<std::string>());
        } else if (value.is_number()) {
            args.push_back(flag);
            args.push_back(value.dump());
        } else {
            delt::fail(delt::ErrorKind::format, "config key '" + key + "' must be a string, number or boolean");
        }
    }
    return args;
}

void write_lines(const fs::path& path, const std::string& content)
{
    std::ofstream out(path, std::ios::binary);
    if (!out || !(out << content))
        delt::fail(delt::ErrorKind::io, "cannot write " + path.string());
}

std::string num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"delt: data scoring, selection and ordering for tiny language models"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);

    Common common;
    ModelFlags model;
    AnnotateFlags ann;
    std::uint64_t seed = 0;

    // synth
    auto* synth = app.add_subcommand("synth", "write a synthetic train/eval corpus pair");
    delt::SynthConfig synth_cfg;
    std::string synth_train, synth_eval;
    synth->add_option("--out-train", synth_train, "train corpus JSONL")->required();
    synth->add_option("--out-eval", synth_eval, "eval corpus JSONL")->required();
    synth->add_option("--samples", synth_cfg.samples, "train samples")->check(CLI::PositiveNumber);
    synth->add_option("--noise-fraction", synth_cfg.noise_fraction, "fraction of random-byte samples")
        ->check(CLI::Range(0.0, 1.0));
    synth->add_option("--eval-samples", synth_cfg.eval_samples, "eval samples")->check(CLI::PositiveNumber);
    synth->add_option("--min-bytes", synth_cfg.min_bytes, "shortest sample")->check(CLI::PositiveNumber);
    synth->add_option("--max-bytes", synth_cfg.max_bytes, "longest sample")->check(CLI::PositiveNumber);
    synth->add_option("--seed", seed, "generator seed");
    add_common(synth, common);

    // score
    auto* score = app.add_subcommand("score", "score every sample of a corpus");
    std::string scorer = "lqs", corpus_path, eval_path, out_path, scores_path, model_path, ngram_out;
    int ngram_order = 3;
    double smoothing = 0.1;
    std::size_t proxy_size = 0;
    score->add_option("--scorer", scorer, "kenlm, pds, lqs, external or regressor")
        ->check(CLI::IsMember({"kenlm", "pds", "lqs", "external", "regressor"}));
    score->add_option("--corpus", corpus_path, "corpus JSONL")->required()->check(CLI::ExistingFile);
    score->add_option("--eval", eval_path, "eval corpus JSONL (pds, lqs)");
    score->add_option("--out", out_path, "score JSONL")->required();
    score->add_option("--scores", scores_path, "score file to adopt (external)");
    score->add_option("--model", model_path, "regressor JSON (regressor)");
    score->add_option("--ngram-order", ngram_order, "n-gram order (kenlm)")->check(CLI::PositiveNumber);
    score->add_option("--smoothing", smoothing, "add-k constant (kenlm)")->check(CLI::PositiveNumber);
    score->add_option("--ngram-out", ngram_out, "also save the fitted n-gram counts (kenlm)");
    score->add_option("--proxy-size", proxy_size, "annotate a seeded subset of this size; 0 = all (pds, lqs)");
    score->add_option("--seed", seed, "model init and proxy sampling seed");
    add_annotation(score, ann);
    add_model(score, model);
    add_common(score, common);

    // annotate
    auto* annotate = app.add_subcommand("annotate", "annotate a proxy corpus and optionally fit a score regressor");
    std::string ann_out, ann_scores_out, ann_ckpt_out, reg_out, feature_kind = "embedding_hidden";
    delt::RegressorConfig reg_cfg;
    annotate->add_option("--proxy", corpus_path, "proxy corpus JSONL")->required()->check(CLI::ExistingFile);
    annotate->add_option("--eval", eval_path, "eval corpus JSONL")->required()->check(CLI::ExistingFile);
    annotate->add_option("--out", ann_out, "annotation JSON")->required();
    annotate->add_option("--scores-out", ann_scores_out, "gamma* as score JSONL");
    annotate->add_option("--checkpoint-out", ann_ckpt_out, "final proxy model checkpoint");
    annotate->add_option("--regressor-out", reg_out, "fit a regressor on gamma* and save it here");
    annotate->add_option("--features", feature_kind, "regressor features")
        ->check(CLI::IsMember({"embedding", "embedding_hidden"}));
    annotate->add_option("--reg-epochs", reg_cfg.epochs, "regressor epochs")->check(CLI::PositiveNumber);
    annotate->add_option("--reg-lr", reg_cfg.learning_rate, "regressor step, relative to 1/L")
        ->check(CLI::PositiveNumber);
    annotate->add_option("--seed", seed, "model init and split seed");
    add_annotation(annotate, ann);
    add_model(annotate, model);
    add_common(annotate, common);

    // select
    auto* select = app.add_subcommand("select", "keep the top-scoring fraction of a corpus");
    double ratio = 1.0;
    select->add_option("--corpus", corpus_path, "corpus JSONL")->required()->check(CLI::ExistingFile);
    select->add_option("--scores", scores_path, "score JSONL")->required()->check(CLI::ExistingFile);
    select->add_option("--ratio", ratio, "kept fraction r in (0, 1]")->check(CLI::Range(0.0, 1.0));
    select->add_option("--out", out_path, "selected corpus JSONL")->required();
    std::string select_scores_out;
    select->add_option("--scores-out", select_scores_out, "scores of the kept samples, for later stages");
    add_common(select, common);

    // order
    auto* order = app.add_subcommand("order", "reorder a corpus by its scores");
    std::string strategy = "fold";
    int layers = 3;
    bool offset_order = false;
    double order_ratio = 1.0;
    order->add_option("--corpus", corpus_path, "corpus JSONL")->required()->check(CLI::ExistingFile);
    order->add_option("--scores", scores_path, "score JSONL")->required()->check(CLI::ExistingFile);
    order->add_option("--strategy", strategy, "shuffle, sort_asc, sort_desc or fold")
        ->check(CLI::IsMember({"shuffle", "sort_asc", "sort_desc", "fold"}));
    order->add_option("--layers", layers, "fold layers L")->check(CLI::PositiveNumber);
    order->add_flag("--offset-order", offset_order, "fold passes start at sorted positions 1..L");
    order->add_option("--ratio", order_ratio, "select this top fraction first")->check(CLI::Range(0.0, 1.0));
    order->add_option("--seed", seed, "shuffle seed");
    order->add_option("--out", out_path, "ordered corpus JSONL (manifest goes to <out>.manifest.json)")->required();
    add_common(order, common);

    // train
    auto* train = app.add_subcommand("train", "train the tiny LM on a corpus in file order");
    delt::TrainConfig train_cfg;
    std::string curve_out;
    train->add_option("--corpus", corpus_path, "ordered corpus JSONL")->required()->check(CLI::ExistingFile);
    train->add_option("--out", out_path, "checkpoint JSON")->required();
    train->add_option("--curve-out", curve_out, "per-batch loss CSV");
    train->add_option("--epochs", train_cfg.epochs, "passes over the corpus")->check(CLI::PositiveNumber);
    train->add_option("--batch-size", train_cfg.batch_size, "samples per step")->check(CLI::PositiveNumber);
    train->add_option("--lr", train_cfg.learning_rate, "SGD learning rate")->check(CLI::NonNegativeNumber);
    train->add_option("--seed", seed, "model init seed");
    add_model(train, model);
    add_common(train, common);

    // eval
    auto* eval = app.add_subcommand("eval", "held-out loss of a checkpoint");
    std::string ckpt_path;
    eval->add_option("--checkpoint", ckpt_path, "checkpoint JSON")->required()->check(CLI::ExistingFile);
    eval->add_option("--eval", eval_path, "eval corpus JSONL")->required()->check(CLI::ExistingFile);
    eval->add_option("--out", out_path, "result JSON (stdout if absent)");
    add_common(eval, common);

    // report
    auto* report = app.add_subcommand("report", "run an experiment spec and write its report");
    std::string spec_path, out_dir;
    bool with_timing = false;
    report->add_option("--spec", spec_path, "experiment spec JSON")->required()->check(CLI::ExistingFile);
    report->add_option("--out-dir", out_dir, "parent of the run directory")->required();
    report->add_flag("--with-timing", with_timing, "also write timing.csv (not reproducible)");
    add_common(report, common);

    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        args = merge_config(std::move(args));
    } catch (const delt::Error& e) {
        std::cerr << "delt: " << e.what() << "\n";
        return 2;
    }
    std::vector<char*> cargs{argv[0]};
    for (auto& a : args)
        cargs.push_back(a.data());

    try {
        app.parse(static_cast<int>(cargs.size()), cargs.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        delt::set_num_threads(common.threads);

        if (*synth) {
            synth_cfg.seed = seed;
            delt::write_synthetic(delt::make_synthetic(synth_cfg), synth_train, synth_eval);
        } else if (*score) {
            const auto corpus = delt::load_jsonl(corpus_path);
            delt::ScoreVector scores;
            if (scorer == "regressor") {
                if (model_path.empty())
                    delt::fail(delt::ErrorKind::domain, "--scorer regressor needs --model");
                scores = delt::predict_scores(delt::regressor_from_json(delt::read_json_file(model_path)), corpus);
            } else {
                delt::ScoringConfig cfg;
                cfg.kind = delt::parse_scorer(scorer);
                cfg.scores_path = scores_path;
                cfg.ngram_order = ngram_order;
                cfg.ngram_smoothing = smoothing;
                cfg.annotation = annotation_config(ann, model, seed);
                cfg.proxy_size = proxy_size;
                if (cfg.kind == delt::ScorerKind::external && scores_path.empty())
                    delt::fail(delt::ErrorKind::domain, "--scorer external needs --scores");
                std::optional<delt::Corpus> ev;
                if (!eval_path.empty())
                    ev = delt::load_jsonl(eval_path);
                scores = delt::score_corpus(corpus, ev ? &*ev : nullptr, cfg, seed);
                if (cfg.kind == delt::ScorerKind::kenlm && !ngram_out.empty())
                    delt::save_ngram(delt::fit_ngram(corpus, ngram_order, smoothing), ngram_out);
            }
            delt::write_scores(corpus, scores, out_path);
        } else if (*annotate) {
            const auto proxy = delt::load_jsonl(corpus_path);
            const auto ev = delt::load_jsonl(eval_path);
            const auto result = delt::annotate_proxy(proxy, ev, annotation_config(ann, model, seed));
            delt::write_json_file(delt::annotation_json(result), ann_out);
            if (!ann_scores_out.empty())
                delt::write_scores(proxy, result.gamma_star, ann_scores_out);
            if (!ann_ckpt_out.empty())
                delt::save_checkpoint(result.final_params, ann_ckpt_out);
            if (!reg_out.empty()) {
                reg_cfg.seed = seed;
                reg_cfg.split_seed = seed;
                const auto phi = delt::FeatureMap::from_params(result.final_params,
                                                               delt::parse_feature_kind(feature_kind));
                const auto reg = delt::train_regressor(proxy, result.gamma_star, phi, reg_cfg);
                delt::write_json_file(delt::regressor_json(reg), reg_out);
            }
        } else if (*select) {
            const auto corpus = delt::load_jsonl(corpus_path);
            const auto scores = delt::read_scores(scores_path);
            const auto kept = delt::select_topk(corpus, scores, ratio);
            delt::write_corpus_jsonl(kept, out_path);
            if (!select_scores_out.empty()) {
                const auto all = scores.aligned(corpus);
                std::unordered_map<std::string, double> by_id;
                for (std::size_t i = 0; i < corpus.size(); ++i)
                    by_id.emplace(corpus[i].id, all[i]);
                std::vector<double> values;
                for (const auto& s : kept)
                    values.push_back(by_id.at(s.id));
                delt::write_scores(kept, delt::ScoreVector::from_values(kept, values), select_scores_out);
            }
        } else if (*order) {
            const auto corpus = delt::load_jsonl(corpus_path);
            const auto scores = delt::read_scores(scores_path);
            delt::OrderingConfig ord;
            ord.strategy = delt::parse_strategy(strategy);
            ord.layers = layers;
            ord.fold_start = offset_order ? delt::FoldStart::first_position : delt::FoldStart::residue_zero;
            if (ord.strategy == delt::OrderingStrategy::shuffle)
                ord.seed = seed;
            std::optional<delt::SelectionConfig> sel;
            if (order_ratio < 1.0)
                sel = delt::SelectionConfig{order_ratio};
            const auto ordered = delt::compose(corpus, scores, sel, ord);
            delt::write_corpus_jsonl(ordered, out_path, true);

            json manifest = {{"format", "delt-order/1"},
                             {"corpus", corpus_path},
                             {"scores", scores_path},
                             {"ordering", delt::to_json(ord)},
                             {"size", ordered.size()},
                             {"provenance", ordered.provenance()}};
            manifest["selection_ratio"] = sel ? json(sel->ratio) : json(nullptr);
            delt::write_json_file(manifest, out_path + ".manifest.json");
        } else if (*train) {
            const auto corpus = delt::load_jsonl(corpus_path);
            train_cfg.seed = seed;
            train_cfg.model = model.make(seed);
            const auto result = delt::train_lm(corpus, train_cfg);
            delt::save_checkpoint(result.params, out_path);
            if (!curve_out.empty()) {
                std::string csv = "batch,loss\n";
                for (std::size_t i = 0; i < result.batch_losses.size(); ++i)
                    csv += std::to_string(i) + "," + num(result.batch_losses[i]) + "\n";
                write_lines(curve_out, csv);
            }
        } else if (*eval) {
            const auto params = delt::load_checkpoint(ckpt_path);
            const double loss = delt::evaluate(params, delt::load_jsonl(eval_path));
            if (out_path.empty())
                std::cout << num(loss) << "\n";
            else
                delt::write_json_file(json{{"eval", eval_path}, {"loss", loss}}, out_path);
        } else if (*report) {
            const auto spec = delt::experiment_spec_from_json(delt::read_json_file(spec_path));
            const fs::path dir = fs::path(out_dir) / delt::spec_hash(spec);
            fs::create_directories(dir);
            delt::write_json_file(delt::to_json(spec), dir / "spec.json");
            const auto rep = delt::run_experiment(spec);
            delt::write_report(rep, dir, with_timing);
            std::cout << dir.string() << "\n";
            for (const auto& row : rep.rows)
                if (!row.ok()) {
                    std::cerr << "delt: " << row.error << "\n";
                    return 1;
                }
        }
    } catch (const delt::Error& e) {
        std::cerr << "delt: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "delt: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
