#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hgdrive/config.hpp"
#include "hgdrive/fdcheck.hpp"

namespace hgd {

struct GradcheckRow {
  std::string name;
  FdResult result;
};

// Finite-difference validation of the reverse pass through the named block
// ("attention" | "encoder" | "decoder" | "heads" | "all"). Each check
// perturbs the block inputs along a small set of fixed random directions, so
// the whole backward chain is exercised at a cost independent of input size.
std::vector<GradcheckRow> run_gradcheck(const std::string& module, const ModelConfig& m,
                                        std::uint64_t seed = 7);

}  // namespace hgd
