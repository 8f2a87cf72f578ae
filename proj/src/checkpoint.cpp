#include "delt/checkpoint.hpp"

#include "delt/error.hpp"

#include <cmath>
#include <fstream>

namespace delt {

using json = nlohmann::json;

json to_json(const ModelConfig& c)
{
    return json{{"context_window", c.context_window},
                {"embed_dim", c.embed_dim},
                {"hidden_dim", c.hidden_dim},
                {"vocab_size", c.vocab_size},
                {"seed", c.seed},
                {"reduction", c.reduction == LossReduction::mean ? "mean" : "sum"}};
}

ModelConfig model_config_from_json(const json& j)
{
    ModelConfig c;
    try {
        c.context_window = j.value("context_window", c.context_window);
        c.embed_dim = j.value("embed_dim", c.embed_dim);
        c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
        c.vocab_size = j.value("vocab_size", c.vocab_size);
        c.seed = j.value("seed", c.seed);
        const auto reduction = j.value("reduction", std::string("mean"));
        if (reduction == "mean")
            c.reduction = LossReduction::mean;
        else if (reduction == "sum")
            c.reduction = LossReduction::sum;
        else
            fail(ErrorKind::format, "unknown loss reduction '" + reduction + "'");
    } catch (const json::exception& e) {
        fail(ErrorKind::format, std::string("bad model config: ") + e.what());
    }
    c.validate();
    return c;
}

json checkpoint_json(const ModelParams& params)
{
    return json{{"format", checkpoint_format}, {"config", to_json(params.config)}, {"theta", params.theta}};
}

ModelParams params_from_checkpoint(const json& j)
{
    if (!j.is_object() || j.value("format", std::string()) != checkpoint_format)
        fail(ErrorKind::format, "not a " + std::string(checkpoint_format) + " checkpoint");
    ModelParams p;
    p.config = model_config_from_json(j.at("config"));
    try {
        p.theta = j.at("theta").get<std::vector<double>>();
    } catch (const json::exception& e) {
        fail(ErrorKind::format, std::string("bad checkpoint theta: ") + e.what());
    }
    if (p.theta.size() != p.config.param_count())
        fail(ErrorKind::shape, "checkpoint holds " + std::to_string(p.theta.size()) + " values, config needs " +
                                   std::to_string(p.config.param_count()));
    for (double t : p.theta)
        if (!std::isfinite(t))
            fail(ErrorKind::format, "checkpoint contains non-finite parameters");
    return p;
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path)
{
    write_json_file(checkpoint_json(params), path, -1);
}

ModelParams load_checkpoint(const std::filesystem::path& path) { return params_from_checkpoint(read_json_file(path)); }

void write_json_file(const json& j, const std::filesystem::path& path, int indent)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        fail(ErrorKind::io, "cannot write " + path.string());
    out << j.dump(indent) << '\n';
    if (!out)
        fail(ErrorKind::io, "write failed for " + path.string());
}

json read_json_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail(ErrorKind::io, "cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        fail(ErrorKind::format, path.string() + ": " + e.what());
    }
}

}  // namespace delt
