#include "harmoniad/autodiff.hpp"

#include <stdexcept>

namespace harmoniad::ad {

namespace {
thread_local Tape* g_active = nullptr;
}

Tape* active_tape() {
  if (g_active == nullptr) throw std::logic_error("Var arithmetic without an active tape");
  return g_active;
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active) { g_active = &tape; }
TapeScope::~TapeScope() { g_active = previous_; }

std::vector<double> Tape::backward(std::int32_t output) const {
  std::vector<double> adjoint;
  backward(output, adjoint);
  return adjoint;
}

void Tape::backward(std::int32_t output, std::vector<double>& adjoint) const {
  adjoint.assign(static_cast<std::size_t>(size()), 0.0);
  if (output < 0) return;
  adjoint[static_cast<std::size_t>(output)] = 1.0;
  for (std::int32_t node = output; node >= 0; --node) {
    const double a = adjoint[static_cast<std::size_t>(node)];
    if (a == 0.0) continue;
    const std::uint32_t begin = offsets_[static_cast<std::size_t>(node)];
    const std::uint32_t end = offsets_[static_cast<std::size_t>(node) + 1];
    for (std::uint32_t e = begin; e < end; ++e) {
      adjoint[static_cast<std::size_t>(edges_[e].parent)] += a * edges_[e].partial;
    }
  }
}

}  // namespace harmoniad::ad
