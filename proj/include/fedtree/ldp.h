#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "fedtree/graph.h"
#include "fedtree/rng.h"

namespace fedtree {

// Symbol carried by an element that is not in the receiver's bin.
inline constexpr double kUnsentSymbol = 0.5;

// Which elements of a sender's feature vector go to which receiver.
struct BinAssignment {
  std::vector<std::uint32_t> bin_of;  // element index -> bin in [0, num_bins)
  std::size_t num_bins = 0;

  std::size_t bin_size(std::size_t bin) const;
};

// Uniform random assignment of `dim` elements into `num_bins` bins.
// Throws kZeroWorkload if num_bins == 0.
BinAssignment AssignBins(std::size_t dim, std::size_t num_bins, Rng& rng);

// Pr[bit = 1] = 1/(e^eps + 1) + (x - a)/(b - a) * (e^eps - 1)/(e^eps + 1).
double OneBitProbability(double x, const FeatureBounds& bounds, double eps_prime);

// One-bit randomized response for a single element. Throws kOutOfRange for
// x outside the bounds or eps_prime <= 0.
int EncodeElement(double x, const FeatureBounds& bounds, double eps_prime, Rng& rng);

// Unbiased inverse of EncodeElement. Symbol 0.5 (not sent) maps to the
// midpoint. Throws kBadSymbol for anything other than 0, 0.5 or 1.
double RecoverElement(double symbol, const FeatureBounds& bounds, double eps_prime);

// Magnitude (b - a)/2 * (e^eps + 1)/(e^eps - 1) of a recovered bit's offset
// from the midpoint.
double RecoveredOffset(const FeatureBounds& bounds, double eps_prime);

// Per-element budget epsilon * fanout / dim.
double ElementBudget(double epsilon, std::size_t fanout, std::size_t dim);

struct EncodedFeature {
  VertexId sender = 0;
  std::size_t bin_index = 0;
  double eps_prime = 0.0;
  std::vector<double> values;  // each in {0, 0.5, 1}
};

struct RecoveredFeature {
  VertexId sender = 0;
  std::vector<double> values;
};

// Compact encoding of everything one sender transmits: the bin layout and one
// encoded bit per element. Message k is the view restricted to bin k.
class SenderEncoding {
 public:
  SenderEncoding() = default;
  SenderEncoding(VertexId sender, double eps_prime, BinAssignment bins,
                 std::vector<std::uint8_t> bits);

  VertexId sender() const { return sender_; }
  double eps_prime() const { return eps_prime_; }
  std::size_t dim() const { return bits_.size(); }
  std::size_t num_messages() const { return bins_.num_bins; }
  const BinAssignment& bins() const { return bins_; }

  EncodedFeature Message(std::size_t bin) const;
  // Element indices carried by message `bin`, ascending.
  std::vector<std::uint32_t> Elements(std::size_t bin) const;
  std::uint8_t bit(std::size_t element) const { return bits_[element]; }

 private:
  VertexId sender_ = 0;
  double eps_prime_ = 0.0;
  BinAssignment bins_;
  std::vector<std::uint8_t> bits_;
};

// Encodes every element once with budget epsilon * fanout / dim, after
// distributing elements into `fanout` bins.
SenderEncoding EncodeSender(VertexId sender, std::span<const double> x, std::size_t fanout,
                            double epsilon, const FeatureBounds& bounds, Rng& rng);

// One partial message per bin; positions outside the bin hold 0.5.
std::vector<EncodedFeature> EncodeForNeighbors(VertexId sender, std::span<const double> x,
                                               std::size_t fanout, double epsilon,
                                               const FeatureBounds& bounds, Rng& rng);

RecoveredFeature Recover(const EncodedFeature& message, const FeatureBounds& bounds);

// Recovered vector stored as midpoint + sparse offsets. Elements not carried
// by the message are exactly the midpoint.
struct SparseRecovered {
  double base = 0.0;
  std::vector<std::uint32_t> index;
  std::vector<double> offset;

  std::vector<double> Dense(std::size_t dim) const;
};

SparseRecovered RecoverSparse(const SenderEncoding& encoding, std::size_t bin,
                              const FeatureBounds& bounds);

// Privacy budget bookkeeping. Each sender may encode once per run; the spend
// recorded for a sender is the mean over its receivers of
// (elements in that receiver's message) * eps_prime, which composes to
// d / fanout * epsilon * fanout / d = epsilon.
class BudgetAccountant {
 public:
  // Throws kInvalidArgument if `encoding.sender()` already encoded.
  void Record(const SenderEncoding& encoding);

  double spent(VertexId sender) const;
  // Largest single-receiver spend for this sender.
  double max_receiver_spend(VertexId sender) const;
  std::size_t encode_count(VertexId sender) const;
  std::size_t total_encodings() const { return total_; }
  std::vector<VertexId> senders() const;

 private:
  std::vector<double> spent_;
  std::vector<double> max_receiver_;
  std::vector<std::size_t> count_;
  std::size_t total_ = 0;
};

// Audit dump: `sender,receiver,s_0,...,s_{d-1}`.
void WriteEncodedCsv(std::ostream& out, const EncodedFeature& message, VertexId receiver);

}  // namespace fedtree
