#include "fedtree/ldp.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedtree/error.h"

namespace fedtree {
namespace {

void CheckBudget(double eps_prime) {
  if (!(eps_prime > 0.0) || !std::isfinite(eps_prime)) {
    throw Error(ErrorCode::kOutOfRange, "element budget must be positive and finite");
  }
}

}  // namespace

std::size_t BinAssignment::bin_size(std::size_t bin) const {
  return static_cast<std::size_t>(std::count(bin_of.begin(), bin_of.end(), bin));
}

BinAssignment AssignBins(std::size_t dim, std::size_t num_bins, Rng& rng) {
  if (num_bins == 0) throw Error(ErrorCode::kZeroWorkload, "cannot distribute into zero bins");
  if (dim == 0) throw Error(ErrorCode::kInvalidArgument, "feature dimension must be positive");
  BinAssignment bins;
  bins.num_bins = num_bins;
  bins.bin_of.resize(dim);
  for (auto& b : bins.bin_of) b = static_cast<std::uint32_t>(UniformInt(rng, 0, num_bins - 1));
  return bins;
}

double OneBitProbability(double x, const FeatureBounds& bounds, double eps_prime) {
  const double e = std::exp(eps_prime);
  return 1.0 / (e + 1.0) + (x - bounds.lower) / bounds.width() * (e - 1.0) / (e + 1.0);
}

int EncodeElement(double x, const FeatureBounds& bounds, double eps_prime, Rng& rng) {
  CheckBudget(eps_prime);
  if (!(x >= bounds.lower && x <= bounds.upper)) {
    throw Error(ErrorCode::kOutOfRange, "value " + std::to_string(x) + " outside bounds");
  }
  return UniformUnit(rng) < OneBitProbability(x, bounds, eps_prime) ? 1 : 0;
}

double RecoveredOffset(const FeatureBounds& bounds, double eps_prime) {
  // (e+1)/(e-1) == 1/tanh(eps/2), which stays accurate for tiny budgets.
  return 0.5 * bounds.width() / std::tanh(0.5 * eps_prime);
}

double RecoverElement(double symbol, const FeatureBounds& bounds, double eps_prime) {
  if (symbol == kUnsentSymbol) return bounds.midpoint();
  CheckBudget(eps_prime);
  if (symbol == 1.0) return bounds.midpoint() + RecoveredOffset(bounds, eps_prime);
  if (symbol == 0.0) return bounds.midpoint() - RecoveredOffset(bounds, eps_prime);
  throw Error(ErrorCode::kBadSymbol, "symbol " + std::to_string(symbol) + " not in {0, 0.5, 1}");
}

double ElementBudget(double epsilon, std::size_t fanout, std::size_t dim) {
  return epsilon * static_cast<double>(fanout) / static_cast<double>(dim);
}

SenderEncoding::SenderEncoding(VertexId sender, double eps_prime, BinAssignment bins,
                               std::vector<std::uint8_t> bits)
    : sender_(sender), eps_prime_(eps_prime), bins_(std::move(bins)), bits_(std::move(bits)) {
  if (bins_.bin_of.size() != bits_.size()) {
    throw Error(ErrorCode::kShapeMismatch, "bin layout and bit vector differ in length");
  }
}

std::vector<std::uint32_t> SenderEncoding::Elements(std::size_t bin) const {
  std::vector<std::uint32_t> out;
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bins_.bin_of[i] == bin) out.push_back(static_cast<std::uint32_t>(i));
  }
  return out;
}

EncodedFeature SenderEncoding::Message(std::size_t bin) const {
  if (bin >= bins_.num_bins) throw Error(ErrorCode::kOutOfRange, "no such bin");
  EncodedFeature msg;
  msg.sender = sender_;
  msg.bin_index = bin;
  msg.eps_prime = eps_prime_;
  msg.values.assign(bits_.size(), kUnsentSymbol);
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bins_.bin_of[i] == bin) msg.values[i] = bits_[i];
  }
  return msg;
}

SenderEncoding EncodeSender(VertexId sender, std::span<const double> x, std::size_t fanout,
                            double epsilon, const FeatureBounds& bounds, Rng& rng) {
  if (fanout == 0) throw Error(ErrorCode::kZeroWorkload, "sender has no receivers");
  if (!(epsilon > 0.0)) throw Error(ErrorCode::kOutOfRange, "epsilon must be positive");
  const double eps_prime = ElementBudget(epsilon, fanout, x.size());
  auto bins = AssignBins(x.size(), fanout, rng);
  std::vector<std::uint8_t> bits(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    bits[i] = static_cast<std::uint8_t>(EncodeElement(x[i], bounds, eps_prime, rng));
  }
  return SenderEncoding(sender, eps_prime, std::move(bins), std::move(bits));
}

std::vector<EncodedFeature> EncodeForNeighbors(VertexId sender, std::span<const double> x,
                                               std::size_t fanout, double epsilon,
                                               const FeatureBounds& bounds, Rng& rng) {
  const auto encoding = EncodeSender(sender, x, fanout, epsilon, bounds, rng);
  std::vector<EncodedFeature> messages;
  messages.reserve(fanout);
  for (std::size_t k = 0; k < fanout; ++k) messages.push_back(encoding.Message(k));
  return messages;
}

RecoveredFeature Recover(const EncodedFeature& message, const FeatureBounds& bounds) {
  RecoveredFeature out;
  out.sender = message.sender;
  out.values.reserve(message.values.size());
  for (double s : message.values) out.values.push_back(RecoverElement(s, bounds, message.eps_prime));
  return out;
}

std::vector<double> SparseRecovered::Dense(std::size_t dim) const {
  std::vector<double> out(dim, base);
  for (std::size_t j = 0; j < index.size(); ++j) out[index[j]] += offset[j];
  return out;
}

SparseRecovered RecoverSparse(const SenderEncoding& encoding, std::size_t bin,
                              const FeatureBounds& bounds) {
  SparseRecovered out;
  out.base = bounds.midpoint();
  const double magnitude = RecoveredOffset(bounds, encoding.eps_prime());
  for (std::uint32_t i : encoding.Elements(bin)) {
    out.index.push_back(i);
    out.offset.push_back(encoding.bit(i) ? magnitude : -magnitude);
  }
  return out;
}

void BudgetAccountant::Record(const SenderEncoding& encoding) {
  const VertexId s = encoding.sender();
  if (spent_.size() <= s) {
    spent_.resize(static_cast<std::size_t>(s) + 1, 0.0);
    max_receiver_.resize(static_cast<std::size_t>(s) + 1, 0.0);
    count_.resize(static_cast<std::size_t>(s) + 1, 0);
  }
  if (count_[s] > 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "sender " + std::to_string(s) + " encoded more than once in a run");
  }
  const std::size_t receivers = encoding.num_messages();
  std::vector<std::size_t> per_bin(receivers, 0);
  for (auto b : encoding.bins().bin_of) ++per_bin[b];
  double total = 0.0;
  double worst = 0.0;
  for (std::size_t k = 0; k < receivers; ++k) {
    const double spend = static_cast<double>(per_bin[k]) * encoding.eps_prime();
    total += spend;
    worst = std::max(worst, spend);
  }
  spent_[s] = total / static_cast<double>(receivers);
  max_receiver_[s] = worst;
  ++count_[s];
  ++total_;
}

double BudgetAccountant::spent(VertexId sender) const {
  return sender < spent_.size() ? spent_[sender] : 0.0;
}

double BudgetAccountant::max_receiver_spend(VertexId sender) const {
  return sender < max_receiver_.size() ? max_receiver_[sender] : 0.0;
}

std::size_t BudgetAccountant::encode_count(VertexId sender) const {
  return sender < count_.size() ? count_[sender] : 0;
}

std::vector<VertexId> BudgetAccountant::senders() const {
  std::vector<VertexId> out;
  for (std::size_t s = 0; s < count_.size(); ++s) {
    if (count_[s] > 0) out.push_back(static_cast<VertexId>(s));
  }
  return out;
}

void WriteEncodedCsv(std::ostream& out, const EncodedFeature& message, VertexId receiver) {
  out << message.sender << ',' << receiver;
  for (double s : message.values) out << ',' << s;
  out << '\n';
}

}  // namespace fedtree
