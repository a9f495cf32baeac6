#pragma once

#include <cmath>
#include <string>
#include <vector>

namespace nmn {

struct MetricRow {
  long step = 0;
  std::string split;
  double loss = NAN;
  double accuracy = NAN;
  double prototype_norm_mean = NAN;
  double alpha = NAN;
};

/// CSV columns, in order: step,split,loss,accuracy,prototype_norm_mean,alpha.
/// Missing values are written as "nan".
class MetricsLog {
 public:
  void add(const MetricRow& row) { rows_.push_back(row); }
  const std::vector<MetricRow>& rows() const { return rows_; }
  std::vector<MetricRow> split(const std::string& name) const;

  std::string to_csv() const;
  void write(const std::string& path) const;
  static MetricsLog read(const std::string& path);

 private:
  std::vector<MetricRow> rows_;
};

}  // namespace nmn
