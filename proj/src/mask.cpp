#include "htl/mask.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "htl/error.hpp"
#include "htl/random.hpp"

namespace htl {

void SegmentedSequence::validate() const {
  const auto describe = [&] {
    return " (q=[" + std::to_string(q_span.begin) + "," + std::to_string(q_span.end) + ") c=[" +
           std::to_string(c_span.begin) + "," + std::to_string(c_span.end) + ") p=[" +
           std::to_string(p_span.begin) + "," + std::to_string(p_span.end) + ") L=" +
           std::to_string(tokens.size()) + ")";
  };
  if (q_span.begin != 0) throw SegmentationError("q span must start at 0" + describe());
  if (q_span.end < q_span.begin || c_span.end < c_span.begin || p_span.end < p_span.begin)
    throw SegmentationError("inverted span" + describe());
  if (q_span.end != c_span.begin || c_span.end != p_span.begin)
    throw SegmentationError("spans must be contiguous and ordered q < c < p" + describe());
  if (p_span.end != tokens.size()) throw SegmentationError("spans must cover the sequence" + describe());
  if (tokens.empty()) throw SegmentationError("empty sequence");
}

AttentionMask::AttentionMask(std::size_t length) : length_(length), flags_(length * length, 0) {
  if (length == 0) throw DimensionError("attention mask of length 0");
}

AttentionMask AttentionMask::all_visible(std::size_t length) {
  AttentionMask m(length);
  std::fill(m.flags_.begin(), m.flags_.end(), std::uint8_t{1});
  return m;
}

double AttentionMask::additive(std::size_t i, std::size_t j) const {
  return allowed(i, j) ? 0.0 : -std::numeric_limits<double>::infinity();
}

std::size_t AttentionMask::zeros_in_row(std::size_t i) const {
  const auto row = flags().subspan(i * length_, length_);
  return static_cast<std::size_t>(std::count(row.begin(), row.end(), std::uint8_t{1}));
}

Tensor AttentionMask::to_tensor() const {
  Tensor t({length_, length_});
  for (std::size_t i = 0; i < length_; ++i)
    for (std::size_t j = 0; j < length_; ++j) t.at(i, j) = additive(i, j);
  return t;
}

AttentionMask build_causal_mask(std::size_t length) {
  AttentionMask m(length);
  for (std::size_t i = 0; i < length; ++i)
    for (std::size_t j = 0; j <= i; ++j) m.allow(i, j);
  return m;
}

namespace {

void check_sinks(const SegmentedSequence& seg, std::size_t sink_count) {
  seg.validate();
  if (sink_count > seg.q_span.size())
    throw SegmentationError("sink count " + std::to_string(sink_count) + " exceeds question span of " +
                            std::to_string(seg.q_span.size()));
}

}  // namespace

AttentionMask build_focus_mask(const SegmentedSequence& seg, std::size_t sink_count) {
  check_sinks(seg, sink_count);
  AttentionMask m = build_causal_mask(seg.length());
  for (std::size_t i = seg.p_span.begin; i < seg.p_span.end; ++i)
    for (std::size_t j = sink_count; j < seg.q_span.end; ++j) m.block(i, j);
  return m;
}

std::vector<std::size_t> maskable_column_order(const SegmentedSequence& seg, std::size_t sink_count,
                                               std::uint64_t seed) {
  check_sinks(seg, sink_count);
  std::vector<std::size_t> cols;
  for (std::size_t j = sink_count; j < seg.q_span.end; ++j) cols.push_back(j);
  Rng rng(seed);
  rng.shuffle(cols);
  return cols;
}

std::size_t masked_column_count(double coverage, std::size_t maskable) {
  if (!(coverage >= 0.0 && coverage <= 1.0))
    throw RangeError("mask coverage " + std::to_string(coverage) + " outside [0,1]");
  const double raw = coverage * static_cast<double>(maskable);
  // Guard against products like 0.3*10 = 3.0000000000000004 ceiling to 4.
  const double nearest = std::round(raw);
  const double count = std::abs(raw - nearest) < 1e-9 ? nearest : std::ceil(raw);
  return std::min(maskable, static_cast<std::size_t>(count));
}

AttentionMask blend_masks(const SegmentedSequence& seg, double coverage, std::size_t sink_count,
                          std::uint64_t seed) {
  const std::size_t n_masked = masked_column_count(coverage, seg.q_span.size() - std::min(sink_count, seg.q_span.size()));
  const auto order = maskable_column_order(seg, sink_count, seed);
  AttentionMask m = build_causal_mask(seg.length());
  for (std::size_t c = 0; c < n_masked; ++c)
    for (std::size_t i = seg.p_span.begin; i < seg.p_span.end; ++i) m.block(i, order[c]);
  return m;
}

}  // namespace htl
