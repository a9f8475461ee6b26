#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "klcbl/data.hpp"

namespace klcbl {

/// counts[t][p]: samples of true class t predicted as p.
struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> counts{};

  std::uint64_t total() const;
  std::uint64_t trace() const;
  std::uint64_t support(int c) const;    // row sum
  std::uint64_t predicted(int c) const;  // column sum

  /// Entrywise sum; associative and commutative, so shards merge in any order.
  ConfusionMatrix& merge(const ConfusionMatrix& other);

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> labels);

/// trace / total; throws on an empty matrix.
double accuracy(const ConfusionMatrix& cm);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;
  /// Some ratio had a zero denominator and was reported as 0.
  bool zero_division = false;
};

/// One-vs-rest precision, recall and F1 for class c.
ClassMetrics per_class_prf(const ConfusionMatrix& cm, int c);

struct WeightedMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Support-weighted average of the per-class values. Weighted recall is
/// computed in its reduced form sum(TP_c) / N, which makes it equal to the
/// accuracy bit for bit.
WeightedMetrics weighted_prf(const ConfusionMatrix& cm);

struct MetricsReport {
  ConfusionMatrix confusion;
  double accuracy = 0.0;
  std::array<ClassMetrics, kNumClasses> per_class{};
  WeightedMetrics weighted;
  double average_loss = 0.0;
  bool zero_division = false;
};

MetricsReport make_report(const ConfusionMatrix& cm, double average_loss);

/// One labelled row of a comparison table.
struct TableRow {
  std::string label;
  MetricsReport metrics;
};

/// Fixed-width UTF-8 table with columns Model, Acc, P, R, F1, Loss; values at
/// seven decimals.
std::string format_metrics_table(const std::vector<TableRow>& rows);

/// Value with exactly seven decimals, e.g. 0.9166667.
std::string format_metric(double value);

}  // namespace klcbl
