#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mainet/error.hpp"
#include "mainet/tensor.hpp"

namespace mainet {

/// Reverse-mode tape. Ops append their backward closures during the forward
/// pass; `backward` replays them once, in reverse execution order.
///
/// A tape is confined to one thread. Batch parallelism is achieved by giving
/// each worker its own tape (and its own gradient accumulators).
class GradTape {
 public:
  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  void record(const char* op, std::function<void()> backward) {
    if (consumed_)
      throw ContractError(std::string("tape: recording '") + op +
                          "' on a consumed tape; reset() first");
    entries_.push_back({op, std::move(backward)});
  }

  /// Ops that cannot produce a gradient call this when handed a live tape,
  /// so a non-differentiable step is rejected at record time instead of
  /// silently truncating the chain.
  [[noreturn]] void reject(const char* op) const {
    throw ContractError(std::string("tape: op '") + op + "' has no backward");
  }

  /// Seeds d(loss)/d(loss) = seed and propagates. Each recorded op runs
  /// exactly once; a second call without reset() is an error.
  void backward(const Tensor& loss, double seed = 1.0) {
    if (loss.size() != 1)
      throw ContractError("tape: backward from non-scalar " + shape_str(loss.shape()));
    if (consumed_) throw ContractError("tape: backward already run; reset() first");
    consumed_ = true;
    if (!loss.requires_grad()) return;  // nothing on this tape feeds the loss
    Tensor l = loss;
    l.mutable_grad()[0] += seed;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->fn();
  }

  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }

  void reset() {
    entries_.clear();
    consumed_ = false;
  }

 private:
  struct Entry {
    const char* op;
    std::function<void()> fn;
  };
  std::vector<Entry> entries_;
  bool consumed_ = false;
};

}  // namespace mainet
