#pragma once

#include <fstream>
#include <string>
#include <vector>

namespace metainv {

/// One metrics record. Column set and order are fixed:
/// experiment,task,step,loss_kind,loss,psnr
struct MetricsRow {
  std::string experiment;
  std::string task;
  long step = 0;  // epoch for training runs, adaptation step for fine-tuning
  std::string loss_kind;
  double loss = 0.0;
  double psnr = 0.0;
};

inline const char* kMetricsHeader = "experiment,task,step,loss_kind,loss,psnr";

/// Append-only writer; emits the header on construction. Values are printed
/// with full double precision so reruns are byte-comparable.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path);
  void write(const MetricsRow& row);

 private:
  std::ofstream out_;
};

std::vector<MetricsRow> read_metrics_csv(const std::string& path);

/// Shortest round-trip decimal form of a double, locale-independent.
std::string format_double(double v);

}  // namespace metainv
