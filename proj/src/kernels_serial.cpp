#include "delt/error.hpp"
#include "delt/kernels.hpp"

#include <cmath>

namespace delt::kernels::serial {

std::vector<double> sample_losses(const ModelParams& params, SeqView seqs)
{
    Workspace ws(params.config);
    std::vector<double> out(seqs.size());
    for (std::size_t n = 0; n < seqs.size(); ++n)
        out[n] = loss_with(params, *seqs[n], ws);
    return out;
}

BatchResult weighted_loss_and_gradient(const ModelParams& params, SeqView seqs, std::span<const double> weights)
{
    if (weights.size() != seqs.size())
        fail(ErrorKind::shape, "weight count does not match sample count");
    Workspace ws(params.config);
    BatchResult out{0.0, std::vector<double>(params.theta.size(), 0.0)};
    std::vector<double> g(params.theta.size());
    for (std::size_t n = 0; n < seqs.size(); ++n) {
        const double loss = value_and_gradient(params, *seqs[n], g, ws);
        const double w = weights[n];
        out.loss += w * loss;
        for (std::size_t i = 0; i < g.size(); ++i)
            out.grad[i] += w * g[i];
    }
    return out;
}

GradientStats gradient_stats(const ModelParams& params, SeqView seqs, std::span<const double> probe)
{
    if (!probe.empty() && probe.size() != params.theta.size())
        fail(ErrorKind::shape, "probe vector length does not match parameter count");
    Workspace ws(params.config);
    GradientStats out;
    out.losses.resize(seqs.size());
    out.norms.resize(seqs.size());
    if (!probe.empty())
        out.dots.resize(seqs.size());
    std::vector<double> g(params.theta.size());
    for (std::size_t n = 0; n < seqs.size(); ++n) {
        out.losses[n] = value_and_gradient(params, *seqs[n], g, ws);
        out.norms[n] = norm2(g);
        if (!probe.empty())
            out.dots[n] = dot(probe, g);
    }
    return out;
}

}  // namespace delt::kernels::serial
