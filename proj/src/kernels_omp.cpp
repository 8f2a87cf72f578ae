#include "delt/error.hpp"
#include "delt/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <exception>
#include <mutex>

namespace delt::kernels::omp {

namespace {

// Samples whose gradients are held at once before the ordered reduction.
constexpr std::size_t block_size = 64;

// Runs body(n, workspace) for n in [begin, end) across workers, rethrowing the
// first exception on the calling thread.
template <typename Body>
void parallel_over(const ModelConfig& cfg, std::size_t begin, std::size_t end, Body&& body)
{
    std::exception_ptr error;
    std::mutex error_mutex;
    const auto count = static_cast<std::ptrdiff_t>(end - begin);
#pragma omp parallel
    {
        Workspace ws(cfg);
#pragma omp for schedule(dynamic, 1)
        for (std::ptrdiff_t k = 0; k < count; ++k) {
            try {
                body(begin + static_cast<std::size_t>(k), ws);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error)
                    error = std::current_exception();
            }
        }
    }
    if (error)
        std::rethrow_exception(error);
}

}  // namespace

std::vector<double> sample_losses(const ModelParams& params, SeqView seqs)
{
    std::vector<double> out(seqs.size());
    parallel_over(params.config, 0, seqs.size(),
                  [&](std::size_t n, Workspace& ws) { out[n] = loss_with(params, *seqs[n], ws); });
    return out;
}

BatchResult weighted_loss_and_gradient(const ModelParams& params, SeqView seqs, std::span<const double> weights)
{
    if (weights.size() != seqs.size())
        fail(ErrorKind::shape, "weight count does not match sample count");
    const std::size_t dim = params.theta.size();
    BatchResult out{0.0, std::vector<double>(dim, 0.0)};
    std::vector<double> grads(std::min(block_size, seqs.size()) * dim);
    std::vector<double> losses(std::min(block_size, seqs.size()));

    for (std::size_t start = 0; start < seqs.size(); start += block_size) {
        const std::size_t stop = std::min(seqs.size(), start + block_size);
        parallel_over(params.config, start, stop, [&](std::size_t n, Workspace& ws) {
            std::span<double> g(grads.data() + (n - start) * dim, dim);
            losses[n - start] = value_and_gradient(params, *seqs[n], g, ws);
        });
        // ordered reduction, identical to the serial accumulation
        for (std::size_t n = start; n < stop; ++n) {
            const double w = weights[n];
            const double* g = grads.data() + (n - start) * dim;
            out.loss += w * losses[n - start];
            for (std::size_t i = 0; i < dim; ++i)
                out.grad[i] += w * g[i];
        }
    }
    return out;
}

GradientStats gradient_stats(const ModelParams& params, SeqView seqs, std::span<const double> probe)
{
    if (!probe.empty() && probe.size() != params.theta.size())
        fail(ErrorKind::shape, "probe vector length does not match parameter count");
    GradientStats out;
    out.losses.resize(seqs.size());
    out.norms.resize(seqs.size());
    if (!probe.empty())
        out.dots.resize(seqs.size());
    const std::size_t dim = params.theta.size();
    const int workers = omp_get_max_threads();
    std::vector<std::vector<double>> scratch(static_cast<std::size_t>(workers), std::vector<double>(dim));
    parallel_over(params.config, 0, seqs.size(), [&](std::size_t n, Workspace& ws) {
        auto& g = scratch[static_cast<std::size_t>(omp_get_thread_num())];
        out.losses[n] = value_and_gradient(params, *seqs[n], g, ws);
        out.norms[n] = norm2(g);
        if (!probe.empty())
            out.dots[n] = dot(probe, g);
    });
    return out;
}

}  // namespace delt::kernels::omp
