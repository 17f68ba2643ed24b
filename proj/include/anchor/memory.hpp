#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "anchor/batch.hpp"
#include "anchor/rng.hpp"

namespace anchor {

/// Episodic memory holding the last `capacity` examples of every
/// (task, class) pair.
class RingMemory {
 public:
  struct Entry {
    std::vector<double> input;
    int label = 0;
    int task_id = 0;
    std::uint64_t seq = 0;  // insertion order across the whole memory
  };
  using SlotKey = std::pair<int, int>;  // (task_id, label)

  RingMemory(std::size_t input_dim, std::size_t capacity_per_slot);

  std::size_t capacity() const { return capacity_; }
  std::size_t input_dim() const { return dim_; }
  std::size_t total_count() const { return total_; }
  bool empty() const { return total_ == 0; }
  std::size_t slot_count() const { return slots_.size(); }

  /// Appends every example to its slot, evicting the oldest entry of a full slot.
  void add(const Batch& batch);

  /// Up to n entries drawn uniformly without replacement from the whole
  /// memory (or from every task except `exclude_task`). Empty when nothing is
  /// stored. Only `rng` is consumed.
  Batch sample(std::size_t n, Rng& rng, std::optional<int> exclude_task = std::nullopt) const;

  /// Every stored entry as one batch, slots in (task, label) order, oldest first.
  Batch all() const;

  const std::deque<Entry>* slot(int task_id, int label) const;
  const std::map<SlotKey, std::deque<Entry>>& slots() const { return slots_; }

 private:
  std::size_t dim_;
  std::size_t capacity_;
  std::size_t total_ = 0;
  std::uint64_t next_seq_ = 0;
  std::map<SlotKey, std::deque<Entry>> slots_;
};

}  // namespace anchor
