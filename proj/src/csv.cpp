#include "metainv/csv.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace metainv {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

MetricsWriter::MetricsWriter(const std::string& path) : out_(path) {
  if (!out_) throw std::runtime_error("MetricsWriter: cannot open " + path);
  out_ << kMetricsHeader << "\n";
}

void MetricsWriter::write(const MetricsRow& row) {
  out_ << row.experiment << ',' << row.task << ',' << row.step << ',' << row.loss_kind << ','
       << format_double(row.loss) << ',' << format_double(row.psnr) << "\n";
  out_.flush();
}

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_metrics_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader)
    throw std::runtime_error("read_metrics_csv: unexpected header in " + path);
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    MetricsRow row;
    std::string field;
    std::getline(ss, row.experiment, ',');
    std::getline(ss, row.task, ',');
    std::getline(ss, field, ',');
    row.step = std::stol(field);
    std::getline(ss, row.loss_kind, ',');
    std::getline(ss, field, ',');
    row.loss = std::stod(field);
    std::getline(ss, field, ',');
    row.psnr = std::stod(field);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace metainv
