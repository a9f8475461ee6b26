#include "klcbl/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace klcbl {

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t n = 0;
  for (const auto& row : counts)
    for (auto v : row) n += v;
  return n;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t n = 0;
  for (int c = 0; c < kNumClasses; ++c) n += counts[c][c];
  return n;
}

std::uint64_t ConfusionMatrix::support(int c) const {
  std::uint64_t n = 0;
  for (auto v : counts.at(c)) n += v;
  return n;
}

std::uint64_t ConfusionMatrix::predicted(int c) const {
  std::uint64_t n = 0;
  for (const auto& row : counts) n += row.at(c);
  return n;
}

ConfusionMatrix& ConfusionMatrix::merge(const ConfusionMatrix& other) {
  for (int t = 0; t < kNumClasses; ++t)
    for (int p = 0; p < kNumClasses; ++p) counts[t][p] += other.counts[t][p];
  return *this;
}

ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) {
    throw ShapeError("confusion: " + std::to_string(predictions.size()) + " predictions for " +
                     std::to_string(labels.size()) + " labels");
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int t = labels[i], p = predictions[i];
    if (t < 0 || t >= kNumClasses || p < 0 || p >= kNumClasses) {
      throw Error("confusion: class out of range at sample " + std::to_string(i) + " (label " + std::to_string(t) +
                  ", prediction " + std::to_string(p) + ")");
    }
    ++cm.counts[t][p];
  }
  return cm;
}

double accuracy(const ConfusionMatrix& cm) {
  const auto n = cm.total();
  if (n == 0) throw Error("accuracy is undefined for an empty confusion matrix");
  return static_cast<double>(cm.trace()) / static_cast<double>(n);
}

ClassMetrics per_class_prf(const ConfusionMatrix& cm, int c) {
  if (c < 0 || c >= kNumClasses) throw Error("per_class_prf: class " + std::to_string(c) + " out of range");
  const auto tp = cm.counts[c][c];
  const auto fp = cm.predicted(c) - tp;
  const auto fn = cm.support(c) - tp;
  ClassMetrics m;
  m.support = cm.support(c);
  if (tp + fp > 0) {
    m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  } else {
    m.zero_division = true;
  }
  if (tp + fn > 0) {
    m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  } else {
    m.zero_division = true;
  }
  if (m.precision + m.recall > 0.0) {
    m.f1 = 2.0 * (m.precision * m.recall) / (m.precision + m.recall);
  } else {
    m.zero_division = true;
  }
  return m;
}

WeightedMetrics weighted_prf(const ConfusionMatrix& cm) {
  const auto n = cm.total();
  if (n == 0) throw Error("weighted metrics are undefined for an empty confusion matrix");
  const double total = static_cast<double>(n);
  WeightedMetrics w;
  for (int c = 0; c < kNumClasses; ++c) {
    const auto m = per_class_prf(cm, c);
    const double support = static_cast<double>(m.support);
    w.precision += support * m.precision;
    w.f1 += support * m.f1;
  }
  w.precision /= total;
  w.f1 /= total;
  // support_c * (TP_c / support_c) == TP_c
  w.recall = static_cast<double>(cm.trace()) / total;
  return w;
}

MetricsReport make_report(const ConfusionMatrix& cm, double average_loss) {
  MetricsReport r;
  r.confusion = cm;
  r.accuracy = accuracy(cm);
  for (int c = 0; c < kNumClasses; ++c) {
    r.per_class[c] = per_class_prf(cm, c);
    r.zero_division = r.zero_division || r.per_class[c].zero_division;
  }
  r.weighted = weighted_prf(cm);
  r.average_loss = average_loss;
  return r;
}

std::string format_metric(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.7f", value);
  return buf;
}

std::string format_metrics_table(const std::vector<TableRow>& rows) {
  std::size_t width = 5;
  for (const auto& r : rows) width = std::max(width, r.label.size());
  std::ostringstream os;
  auto pad = [&](const std::string& s, std::size_t w) { return s + std::string(w > s.size() ? w - s.size() : 0, ' '); };
  os << pad("Model", width) << "  " << pad("Acc", 9) << "  " << pad("P", 9) << "  " << pad("R", 9) << "  "
     << pad("F1", 9) << "  Loss\n";
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    os << pad(r.label, width) << "  " << format_metric(m.accuracy) << "  " << format_metric(m.weighted.precision)
       << "  " << format_metric(m.weighted.recall) << "  " << format_metric(m.weighted.f1) << "  "
       << format_metric(m.average_loss) << '\n';
  }
  return os.str();
}

}  // namespace klcbl
