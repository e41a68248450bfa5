#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "htl/tensor.hpp"

namespace htl {

/// Half-open index range [begin, end).
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool empty() const { return end <= begin; }
  bool contains(std::size_t i) const { return i >= begin && i < end; }
  friend bool operator==(const Span&, const Span&) = default;
};

/// Token ids split into question (with instruction), CoT and PoT segments.
/// Separator tokens belong to the span that precedes them.
struct SegmentedSequence {
  std::vector<int> tokens;
  Span q_span;
  Span c_span;
  Span p_span;
  // Set for the insert layout, where C is part of the prompt.
  bool c_in_prompt = false;

  std::size_t length() const { return tokens.size(); }
  // Throws SegmentationError unless the spans are ordered, disjoint and cover
  // the sequence with q starting at 0.
  void validate() const;
};

/// L×L additive attention mask over {0, -inf}, stored as allow flags.
class AttentionMask {
 public:
  // Every entry masked.
  explicit AttentionMask(std::size_t length);
  // Every entry visible (mask ≡ 0). Non-causal; used by tests.
  static AttentionMask all_visible(std::size_t length);

  std::size_t length() const { return length_; }
  bool allowed(std::size_t i, std::size_t j) const { return flags_[i * length_ + j] != 0; }
  void allow(std::size_t i, std::size_t j) { flags_[i * length_ + j] = 1; }
  void block(std::size_t i, std::size_t j) { flags_[i * length_ + j] = 0; }
  double additive(std::size_t i, std::size_t j) const;
  std::span<const std::uint8_t> flags() const { return flags_; }

  std::size_t zeros_in_row(std::size_t i) const;
  Tensor to_tensor() const;

  friend bool operator==(const AttentionMask&, const AttentionMask&) = default;

 private:
  std::size_t length_;
  std::vector<std::uint8_t> flags_;
};

inline constexpr std::size_t kDefaultSinkCount = 4;

/// M[i][j] = 0 iff j <= i.
AttentionMask build_causal_mask(std::size_t length);

/// Causal rows for Q and C; a P row i sees j <= i only when j is a sink
/// position, in C, or in P.
AttentionMask build_focus_mask(const SegmentedSequence& seg, std::size_t sink_count = kDefaultSinkCount);

/// Seeded permutation of the maskable question columns (q_span minus the
/// sinks). Coverage λ hides the first ⌈λ·n⌉ entries, so masks at growing λ
/// are nested under one seed.
std::vector<std::size_t> maskable_column_order(const SegmentedSequence& seg, std::size_t sink_count,
                                               std::uint64_t seed);

std::size_t masked_column_count(double coverage, std::size_t maskable);

/// Causal mask with ⌈λ·|maskable|⌉ question columns hidden from every P row.
/// λ = 0 gives the causal mask, λ = 1 the focus mask.
AttentionMask blend_masks(const SegmentedSequence& seg, double coverage, std::size_t sink_count,
                          std::uint64_t seed);

}  // namespace htl
