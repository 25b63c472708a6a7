#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gap {

// One metrics row: an epoch row or a mask event ("grow"/"prune") row.
struct MetricsRow {
  std::string run_id;
  std::string method;
  int step = -1;
  int round = -1;
  int epoch = -1;
  std::string event; // "epoch" | "grow" | "prune"
  std::optional<double> lr;
  std::optional<double> train_loss;
  std::optional<double> val_loss;
  std::optional<double> val_accuracy;
  std::optional<double> global_sparsity;
  std::string per_partition_sparsity; // semicolon-joined
  std::optional<double> coverage;
  std::optional<double> delta_sq; // prune rows only
  std::optional<std::int64_t> flops;
  std::optional<double> wall_seconds;
  std::optional<int> partition; // grow/prune rows: which group
};

// Append-only log of a run plus the diagnostics series the analysis module
// fills in.
struct RunRecord {
  std::string run_id;
  std::string method;
  std::vector<MetricsRow> rows;

  // Per-round Proposition-1 series (lengths == rounds when recorded).
  std::vector<double> probe_grad_norms;
  std::vector<double> round_mask_errors;

  // P-GaP transport audit: per-step {distribute, result} counts.
  std::vector<std::pair<int, int>> message_counts;

  int best_step = -1;
  double best_val_accuracy = 0.0;

  int epochs_consumed = 0;

  void add_row(MetricsRow row) { rows.push_back(std::move(row)); }
};

// Stable column order; one header row. Doubles print with 17 significant
// digits so reruns diff byte-for-byte.
std::string metrics_csv_header();
std::string metrics_csv_line(const MetricsRow &row);
void write_metrics_csv(const RunRecord &record, const std::string &path);

std::string format_double(double v);

} // namespace gap
