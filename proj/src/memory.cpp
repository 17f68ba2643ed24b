#include "anchor/memory.hpp"

#include <algorithm>
#include <stdexcept>

namespace anchor {

RingMemory::RingMemory(std::size_t input_dim, std::size_t capacity_per_slot)
    : dim_(input_dim), capacity_(capacity_per_slot) {
  if (capacity_ == 0) throw std::invalid_argument("memory capacity must be at least 1");
}

void RingMemory::add(const Batch& batch) {
  batch.validate();
  if (batch.empty()) return;
  if (batch.dim != dim_) throw std::invalid_argument("memory: input width mismatch");
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto& q = slots_[{batch.task_ids[i], batch.labels[i]}];
    const auto x = batch.input(i);
    q.push_back(Entry{{x.begin(), x.end()}, batch.labels[i], batch.task_ids[i], next_seq_++});
    if (q.size() > capacity_)
      q.pop_front();
    else
      ++total_;
  }
}

Batch RingMemory::sample(std::size_t n, Rng& rng, std::optional<int> exclude_task) const {
  Batch out(dim_);
  if (n == 0 || total_ == 0) return out;
  std::vector<const Entry*> pool;
  pool.reserve(total_);
  for (const auto& [key, q] : slots_) {
    if (exclude_task && key.first == *exclude_task) continue;
    for (const auto& e : q) pool.push_back(&e);
  }
  std::vector<const Entry*> picked;
  picked.reserve(std::min(n, pool.size()));
  std::sample(pool.begin(), pool.end(), std::back_inserter(picked), n, rng);
  out.reserve(picked.size());
  for (const Entry* e : picked) out.push_back(e->input, e->label, e->task_id);
  return out;
}

Batch RingMemory::all() const {
  Batch out(dim_);
  out.reserve(total_);
  for (const auto& [key, q] : slots_)
    for (const auto& e : q) out.push_back(e.input, e.label, e.task_id);
  return out;
}

const std::deque<RingMemory::Entry>* RingMemory::slot(int task_id, int label) const {
  auto it = slots_.find({task_id, label});
  return it == slots_.end() ? nullptr : &it->second;
}

}  // namespace anchor
