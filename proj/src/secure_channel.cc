#include "fedtree/secure_channel.h"

#include <algorithm>
#include <string>

#include "fedtree/error.h"

namespace fedtree {

std::string_view CompareContextName(CompareContext context) {
  switch (context) {
    case CompareContext::kGreedyInit: return "GreedyInit";
    case CompareContext::kArgmaxLocal: return "ArgmaxLocal";
    case CompareContext::kArgmaxGlobal: return "ArgmaxGlobal";
    case CompareContext::kMhDelta: return "MHDelta";
  }
  return "Unknown";
}

void PrivacyLedger::Append(const CompareTranscript& transcript) {
  std::lock_guard lock(mutex_);
  ++counts_[static_cast<int>(transcript.context)];
  bits_ += transcript.bits_exchanged;
  const VertexId hi = std::max(transcript.party_a, transcript.party_b);
  if (revealed_.size() <= hi) revealed_.resize(static_cast<std::size_t>(hi) + 1, 0);
  ++revealed_[transcript.party_a];
  if (transcript.party_b != transcript.party_a) ++revealed_[transcript.party_b];
  if (transcripts_.size() < retain_limit_) transcripts_.push_back(transcript);
}

void PrivacyLedger::Merge(PrivacyLedger& shard) {
  if (&shard == this) return;
  std::scoped_lock lock(mutex_, shard.mutex_);
  for (int c = 0; c < kNumCompareContexts; ++c) {
    counts_[c] += shard.counts_[c];
    shard.counts_[c] = 0;
  }
  bits_ += shard.bits_;
  shard.bits_ = 0;
  if (revealed_.size() < shard.revealed_.size()) revealed_.resize(shard.revealed_.size(), 0);
  for (std::size_t i = 0; i < shard.revealed_.size(); ++i) revealed_[i] += shard.revealed_[i];
  shard.revealed_.clear();
  for (const auto& t : shard.transcripts_) {
    if (transcripts_.size() >= retain_limit_) break;
    transcripts_.push_back(t);
  }
  shard.transcripts_.clear();
}

std::size_t PrivacyLedger::retain_capacity() const {
  std::lock_guard lock(mutex_);
  return retain_limit_ - std::min(retain_limit_, transcripts_.size());
}

std::uint64_t PrivacyLedger::total_comparisons() const {
  std::lock_guard lock(mutex_);
  std::uint64_t total = 0;
  for (auto c : counts_) total += c;
  return total;
}

std::uint64_t PrivacyLedger::comparisons(CompareContext context) const {
  std::lock_guard lock(mutex_);
  return counts_[static_cast<int>(context)];
}

std::uint64_t PrivacyLedger::total_bits() const {
  std::lock_guard lock(mutex_);
  return bits_;
}

std::uint64_t PrivacyLedger::revealed_to(VertexId id) const {
  std::lock_guard lock(mutex_);
  return id < revealed_.size() ? revealed_[id] : 0;
}

void PrivacyLedger::WriteCsv(std::ostream& out, bool include_outcome) const {
  std::lock_guard lock(mutex_);
  out << "context,a_id,b_id,bits_exchanged" << (include_outcome ? ",outcome" : "") << '\n';
  for (const auto& t : transcripts_) {
    out << CompareContextName(t.context) << ',' << t.party_a << ',' << t.party_b << ','
        << t.bits_exchanged;
    if (include_outcome) out << ',' << (t.outcome ? 1 : 0);
    out << '\n';
  }
}

std::uint64_t ComparisonCostBits(int bit_width, std::uint64_t cost_constant) {
  std::uint64_t log2_ceil = 0;
  while ((std::uint64_t{1} << log2_ceil) < static_cast<std::uint64_t>(bit_width)) ++log2_ceil;
  return cost_constant * static_cast<std::uint64_t>(bit_width) * log2_ceil;
}

SecureChannel::SecureChannel(PrivacyLedger& ledger, ChannelOptions options)
    : ledger_(&ledger), options_(options) {
  if (options_.bit_width < 1 || options_.bit_width > 62) {
    throw Error(ErrorCode::kInvalidArgument, "bit_width must be in [1, 62]");
  }
  bits_per_call_ = ComparisonCostBits(options_.bit_width, options_.cost_constant);
}

void SecureChannel::CheckRange(std::int64_t value) const {
  if (value < 0 || value >= (std::int64_t{1} << options_.bit_width)) {
    throw Error(ErrorCode::kOverflow, "value " + std::to_string(value) + " does not fit in " +
                                          std::to_string(options_.bit_width) + " bits");
  }
}

bool SecureChannel::Compare(std::int64_t a_value, std::int64_t b_value, VertexId a_id,
                            VertexId b_id, CompareContext context) {
  CheckRange(a_value);
  CheckRange(b_value);
  const bool outcome = a_value >= b_value;
  ledger_->Append({a_id, b_id, outcome, bits_per_call_, context});
  return outcome;
}

std::int64_t SecureChannel::Delta(std::int64_t f_old, std::int64_t f_new, VertexId a_id,
                                  VertexId b_id) {
  CheckRange(f_old);
  CheckRange(f_new);
  const std::int64_t delta = f_old - f_new;
  ledger_->Append({a_id, b_id, delta >= 0, bits_per_call_, CompareContext::kMhDelta});
  return delta;
}

}  // namespace fedtree
