#pragma once

namespace qaexpert {

/// Worker count for OpenMP kernels: the runtime default, capped by the
/// QA_EXPERT_THREADS environment variable when it holds a positive integer.
int worker_count();

/// Number of fixed reduction blocks. Partial sums are formed per block and
/// combined in block order, so reductions do not depend on the thread count.
inline constexpr int kReductionBlocks = 64;

}  // namespace qaexpert
