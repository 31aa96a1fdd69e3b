#pragma once

#include <cstdint>
#include <mutex>
#include <ostream>
#include <string_view>
#include <vector>

#include "fedtree/graph.h"

namespace fedtree {

// Which step of the balancing protocol issued a comparison.
enum class CompareContext : std::uint8_t {
  kGreedyInit = 0,
  kArgmaxLocal = 1,
  kArgmaxGlobal = 2,
  kMhDelta = 3,
};
inline constexpr int kNumCompareContexts = 4;

std::string_view CompareContextName(CompareContext context);

// What one two-party comparison reveals. Operand values are never stored.
struct CompareTranscript {
  VertexId party_a = 0;
  VertexId party_b = 0;
  bool outcome = false;
  std::uint64_t bits_exchanged = 0;
  CompareContext context = CompareContext::kGreedyInit;
};

// Append-only log of comparison transcripts plus aggregate counters.
//
// Every appended transcript updates the counters. The transcript list itself
// can be capped (`retain_limit`) so that long balancing runs on large graphs
// keep bounded memory; the retained list is then the first `retain_limit`
// entries. Appends are serialized by an internal mutex.
class PrivacyLedger {
 public:
  static constexpr std::size_t kRetainAll = static_cast<std::size_t>(-1);

  explicit PrivacyLedger(std::size_t retain_limit = kRetainAll) : retain_limit_(retain_limit) {}

  PrivacyLedger(const PrivacyLedger&) = delete;
  PrivacyLedger& operator=(const PrivacyLedger&) = delete;

  void Append(const CompareTranscript& transcript);
  // Moves all of `shard`'s entries and counters into this ledger.
  void Merge(PrivacyLedger& shard);

  std::uint64_t total_comparisons() const;
  std::uint64_t comparisons(CompareContext context) const;
  std::uint64_t total_bits() const;
  // Number of comparison outcomes device `id` has learned (as either party).
  std::uint64_t revealed_to(VertexId id) const;

  const std::vector<CompareTranscript>& transcripts() const { return transcripts_; }
  bool truncated() const { return total_comparisons() > transcripts_.size(); }
  // How many more transcripts will be retained.
  std::size_t retain_capacity() const;

  // CSV with header `context,a_id,b_id,bits_exchanged`; the outcome column is
  // appended only when `include_outcome` is set (debug exports).
  void WriteCsv(std::ostream& out, bool include_outcome = false) const;

 private:
  mutable std::mutex mutex_;
  std::size_t retain_limit_;
  std::vector<CompareTranscript> transcripts_;
  std::uint64_t counts_[kNumCompareContexts] = {};
  std::uint64_t bits_ = 0;
  std::vector<std::uint64_t> revealed_;
};

struct ChannelOptions {
  // Bit width used to encode degree and workload integers.
  int bit_width = 32;
  // Multiplier c in the cost model c * L * ceil(log2 L).
  std::uint64_t cost_constant = 2;
};

// Simulated two-party integer protocol. Values are compared in the clear
// inside the simulator, but every call is routed through here so that the
// only thing leaving a call is the outcome, and the ledger can be audited.
class SecureChannel {
 public:
  explicit SecureChannel(PrivacyLedger& ledger, ChannelOptions options = {});

  // Returns a_value >= b_value. Throws kOverflow if either value does not fit
  // in `bit_width` unsigned bits.
  bool Compare(std::int64_t a_value, std::int64_t b_value, VertexId a_id, VertexId b_id,
               CompareContext context);

  // Returns f_old - f_new; the proposing party learns only this difference.
  std::int64_t Delta(std::int64_t f_old, std::int64_t f_new, VertexId a_id, VertexId b_id);

  std::uint64_t bits_per_comparison() const { return bits_per_call_; }
  const ChannelOptions& options() const { return options_; }
  PrivacyLedger& ledger() { return *ledger_; }

 private:
  void CheckRange(std::int64_t value) const;

  PrivacyLedger* ledger_;
  ChannelOptions options_;
  std::uint64_t bits_per_call_;
};

// c * L * ceil(log2 L).
std::uint64_t ComparisonCostBits(int bit_width, std::uint64_t cost_constant);

}  // namespace fedtree
