#pragma once

#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "dfs/metrics.hpp"
#include "dfs/training.hpp"

// Result tables and loss plots, computed from RunRecords alone.
namespace dfs::report {

// One row of an emitted table: a label and the MetricsReport field it shows.
struct Row {
  std::string label;
  double metrics::MetricsReport::*field;
};

// Segmentation-map quality of the training-time segmentation network:
// rows PSNR and SSIM.
const std::vector<Row>& segmap_rows();
// Held-out evaluator: rows IoU-cl, iIoU-cl, IoU-ca, iIoU-ca.
const std::vector<Row>& segmentation_rows();
// Image restoration and segmentation loss.
const std::vector<Row>& image_rows();

struct ArmStats {
  metrics::MetricsReport mean;
  metrics::MetricsReport stddev;  // population
  int runs = 0;
};

struct Aggregate {
  std::string test_id;
  std::map<metrics::Arm, ArmStats> arms;
};

// Pools test_reports per arm over all records. Throws ValidationError on an
// empty list, on records without test reports, and on mismatched test ids.
Aggregate aggregate(const std::vector<train::RunRecord>& runs);

// CSV with header "Metrics,Hazy,Dehaze,DFS,GT" holding arm means; missing
// arms are empty cells.
void write_table_csv(std::ostream& out, const Aggregate& agg, const std::vector<Row>& rows);
// Long form: table,metric,arm,mean,std,runs.
void write_summary_csv(std::ostream& out, const Aggregate& agg);
// Fixed-width text with "mean ± std" cells.
std::string render_text(const Aggregate& agg);

// Composite generator loss against step, one 10-step moving average line
// per record.
std::string loss_curve_svg(const std::vector<train::RunRecord>& runs);

struct ReportFiles {
  std::filesystem::path segmap_csv, segmentation_csv, image_csv, summary_csv, text, loss_plot;
};

// Writes every table and the loss plot under `out_dir`.
ReportFiles report_tables(const std::vector<train::RunRecord>& runs, const std::filesystem::path& out_dir);

// Versioned per-arm metrics CSV used by `evaluate`.
inline constexpr const char* kMetricsCsvHeader =
    "# dfs metrics csv v1\nscope,psnr,ssim,mse,iou_cl,iiou_cl,iou_ca,iiou_ca,seg_psnr,seg_ssim,seg_loss";
void write_metrics_csv(std::ostream& out, const std::vector<std::pair<std::string, metrics::MetricsReport>>& rows);

}  // namespace dfs::report
