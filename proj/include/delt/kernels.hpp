#pragma once

// Batch kernels over samples. `serial` is the reference; `omp` spreads
// samples over OpenMP workers and reduces in sample-index order, so both
// produce bit-identical results for any worker count.

#include "delt/tinylm.hpp"

#include <span>
#include <vector>

namespace delt::kernels {

using SeqView = std::span<const TokenSeq* const>;

struct BatchResult {
    double loss = 0.0;          // sum_n w_n * loss_n
    std::vector<double> grad;   // sum_n w_n * grad_n
};

/// Per-sample gradient statistics: norms of each gradient and, when a probe
/// vector is given, its inner product with each gradient.
struct GradientStats {
    std::vector<double> losses;
    std::vector<double> norms;
    std::vector<double> dots;
};

namespace serial {

std::vector<double> sample_losses(const ModelParams& params, SeqView seqs);
BatchResult weighted_loss_and_gradient(const ModelParams& params, SeqView seqs, std::span<const double> weights);
GradientStats gradient_stats(const ModelParams& params, SeqView seqs, std::span<const double> probe);

}  // namespace serial

namespace omp {

std::vector<double> sample_losses(const ModelParams& params, SeqView seqs);
BatchResult weighted_loss_and_gradient(const ModelParams& params, SeqView seqs, std::span<const double> weights);
GradientStats gradient_stats(const ModelParams& params, SeqView seqs, std::span<const double> probe);

}  // namespace omp

}  // namespace delt::kernels
