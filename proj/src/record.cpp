#include "gap/record.hpp"

#include <cstdio>
#include <fstream>

#include "gap/error.hpp"

namespace gap {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string metrics_csv_header() {
  return "run_id,method,step,round,epoch,event,lr,train_loss,val_loss,"
         "val_accuracy,global_sparsity,per_partition_sparsity,coverage,"
         "delta_sq,flops,wall_seconds,partition";
}

namespace {

std::string cell(const std::optional<double> &v) {
  return v ? format_double(*v) : std::string();
}

std::string cell(const std::optional<std::int64_t> &v) {
  return v ? std::to_string(*v) : std::string();
}

std::string cell(const std::optional<int> &v) {
  return v ? std::to_string(*v) : std::string();
}

} // namespace

std::string metrics_csv_line(const MetricsRow &row) {
  std::string out;
  out += row.run_id;
  out += ',';
  out += row.method;
  out += ',';
  out += std::to_string(row.step);
  out += ',';
  out += std::to_string(row.round);
  out += ',';
  out += std::to_string(row.epoch);
  out += ',';
  out += row.event;
  out += ',';
  out += cell(row.lr);
  out += ',';
  out += cell(row.train_loss);
  out += ',';
  out += cell(row.val_loss);
  out += ',';
  out += cell(row.val_accuracy);
  out += ',';
  out += cell(row.global_sparsity);
  out += ',';
  out += row.per_partition_sparsity;
  out += ',';
  out += cell(row.coverage);
  out += ',';
  out += cell(row.delta_sq);
  out += ',';
  out += cell(row.flops);
  out += ',';
  out += cell(row.wall_seconds);
  out += ',';
  out += cell(row.partition);
  return out;
}

void write_metrics_csv(const RunRecord &record, const std::string &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open metrics file " + path);
  out << metrics_csv_header() << '\n';
  for (const MetricsRow &row : record.rows) out << metrics_csv_line(row) << '\n';
}

} // namespace gap
