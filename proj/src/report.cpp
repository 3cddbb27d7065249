#include "dfs/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "dfs/error.hpp"

namespace dfs::report {
namespace {

using metrics::Arm;
using metrics::MetricsReport;

std::string fmt(double v, int precision) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

std::string full(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

int precision_for(const std::string& label) { return label.find("PSNR") != std::string::npos ? 2 : 4; }

struct Table {
  const char* name;
  const char* title;
  const std::vector<Row>* rows;
};

std::vector<Table> tables() {
  return {{"segmap", "Segmentation maps of the training-time network vs ground truth", &segmap_rows()},
          {"segmentation", "Held-out segmentation network", &segmentation_rows()},
          {"image", "Image restoration", &image_rows()}};
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
}

}  // namespace

const std::vector<Row>& segmap_rows() {
  static const std::vector<Row> rows{{"PSNR", &MetricsReport::seg_psnr}, {"SSIM", &MetricsReport::seg_ssim}};
  return rows;
}

const std::vector<Row>& segmentation_rows() {
  static const std::vector<Row> rows{{"IoU-cl", &MetricsReport::iou_cl},
                                     {"iIoU-cl", &MetricsReport::iiou_cl},
                                     {"IoU-ca", &MetricsReport::iou_ca},
                                     {"iIoU-ca", &MetricsReport::iiou_ca}};
  return rows;
}

const std::vector<Row>& image_rows() {
  static const std::vector<Row> rows{{"PSNR", &MetricsReport::psnr},
                                     {"SSIM", &MetricsReport::ssim},
                                     {"MSE", &MetricsReport::mse},
                                     {"seg loss", &MetricsReport::seg_loss}};
  return rows;
}

Aggregate aggregate(const std::vector<train::RunRecord>& runs) {
  if (runs.empty()) throw ValidationError("no run records to report");
  Aggregate agg;
  std::map<Arm, std::vector<MetricsReport>> by_arm;
  for (const auto& r : runs) {
    if (r.test_reports.empty())
      throw ValidationError("run record (seed " + std::to_string(r.config.seed) + ", regime " +
                            train::to_string(r.config.regime) + ") has no test evaluation");
    if (agg.test_id.empty()) agg.test_id = r.test_id;
    if (r.test_id != agg.test_id)
      throw ValidationError("runs were evaluated on different test sets (" + agg.test_id + " vs " + r.test_id +
                            "); refusing to aggregate");
    for (const auto& [arm, rep] : r.test_reports) by_arm[arm].push_back(rep);
  }
  std::vector<Row> all;
  for (const auto& t : tables()) all.insert(all.end(), t.rows->begin(), t.rows->end());
  for (const auto& [arm, reps] : by_arm) {
    ArmStats st;
    st.runs = static_cast<int>(reps.size());
    st.mean.arm = st.stddev.arm = arm;
    const double n = reps.size();
    for (const auto& row : all) {
      double m = 0, v = 0;
      for (const auto& r : reps) m += r.*row.field / n;
      for (const auto& r : reps) v += (r.*row.field - m) * (r.*row.field - m) / n;
      st.mean.*row.field = m;
      st.stddev.*row.field = std::sqrt(v);
    }
    agg.arms[arm] = st;
  }
  return agg;
}

void write_table_csv(std::ostream& out, const Aggregate& agg, const std::vector<Row>& rows) {
  out << "Metrics";
  for (Arm a : metrics::kArms) out << "," << metrics::to_string(a);
  out << "\n";
  for (const auto& row : rows) {
    out << row.label;
    for (Arm a : metrics::kArms) {
      out << ",";
      auto it = agg.arms.find(a);
      if (it != agg.arms.end()) out << full(it->second.mean.*row.field);
    }
    out << "\n";
  }
}

void write_summary_csv(std::ostream& out, const Aggregate& agg) {
  out << "table,metric,arm,mean,std,runs\n";
  for (const auto& t : tables())
    for (const auto& row : *t.rows)
      for (Arm a : metrics::kArms) {
        auto it = agg.arms.find(a);
        if (it == agg.arms.end()) continue;
        out << t.name << "," << row.label << "," << metrics::to_string(a) << "," << full(it->second.mean.*row.field)
            << "," << full(it->second.stddev.*row.field) << "," << it->second.runs << "\n";
      }
}

std::string render_text(const Aggregate& agg) {
  std::ostringstream o;
  int runs = 0;
  for (const auto& [arm, st] : agg.arms) runs = std::max(runs, st.runs);
  o << "test set " << agg.test_id.substr(0, 16) << ", mean ± std over " << runs << " run" << (runs == 1 ? "" : "s")
    << "\n";
  char buf[128];
  for (const auto& t : tables()) {
    o << "\n" << t.title << "\n";
    std::snprintf(buf, sizeof buf, "%-10s", "");
    o << buf;
    for (Arm a : metrics::kArms) {
      std::snprintf(buf, sizeof buf, "%20s", metrics::to_string(a).c_str());
      o << buf;
    }
    o << "\n";
    for (const auto& row : *t.rows) {
      std::snprintf(buf, sizeof buf, "%-10s", row.label.c_str());
      o << buf;
      const int p = precision_for(row.label);
      for (Arm a : metrics::kArms) {
        auto it = agg.arms.find(a);
        const std::string cell = it == agg.arms.end() ? "-"
                                                      : fmt(it->second.mean.*row.field, p) + " ± " +
                                                            fmt(it->second.stddev.*row.field, p);
        // "±" is two bytes but one column
        std::snprintf(buf, sizeof buf, "%*s", it == agg.arms.end() ? 20 : 21, cell.c_str());
        o << buf;
      }
      o << "\n";
    }
  }
  return o.str();
}

std::string loss_curve_svg(const std::vector<train::RunRecord>& runs) {
  const double W = 720, H = 420, left = 70, right = 160, top = 30, bottom = 50;
  std::vector<std::vector<double>> curves;
  double ymin = std::numeric_limits<double>::infinity(), ymax = -ymin;
  std::size_t xmax = 1;
  for (const auto& r : runs) {
    std::vector<double> c;
    double window = 0;
    for (std::size_t i = 0; i < r.step_log.size(); ++i) {
      window += r.step_log[i].total;
      if (i >= 10) window -= r.step_log[i - 10].total;
      c.push_back(window / static_cast<double>(std::min<std::size_t>(i + 1, 10)));
    }
    for (double v : c)
      if (std::isfinite(v)) {
        ymin = std::min(ymin, v);
        ymax = std::max(ymax, v);
      }
    xmax = std::max(xmax, c.size());
    curves.push_back(std::move(c));
  }
  if (!std::isfinite(ymin)) ymin = 0, ymax = 1;
  if (ymax <= ymin) ymax = ymin + 1;
  auto X = [&](double i) { return left + (W - left - right) * i / std::max<double>(1, xmax - 1); };
  auto Y = [&](double v) { return top + (H - top - bottom) * (1 - (v - ymin) / (ymax - ymin)); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << left << "\" y=\"18\">composite generator loss (10-step moving average)</text>\n"
    << "<line x1=\"" << left << "\" y1=\"" << H - bottom << "\" x2=\"" << W - right << "\" y2=\"" << H - bottom
    << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << H - bottom
    << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = ymin + (ymax - ymin) * k / 4;
    o << "<text x=\"" << left - 6 << "\" y=\"" << Y(v) + 4 << "\" text-anchor=\"end\">" << fmt(v, 3) << "</text>\n";
    const double i = (xmax - 1) * k / 4.0;
    o << "<text x=\"" << X(i) << "\" y=\"" << H - bottom + 16 << "\" text-anchor=\"middle\">"
      << static_cast<long>(std::lround(i)) << "</text>\n";
  }
  o << "<text x=\"" << (left + W - right) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">step</text>\n";
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                  "#8c564b", "#e377c2", "#17becf", "#7f7f7f", "#bcbd22"};
  for (std::size_t r = 0; r < curves.size(); ++r) {
    const char* color = kColors[r % 10];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < curves[r].size(); ++i)
      if (std::isfinite(curves[r][i])) o << X(i) << "," << Y(curves[r][i]) << " ";
    o << "\"/>\n";
    const double ly = top + 16.0 * r;
    o << "<line x1=\"" << W - right + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - right + 30 << "\" y2=\"" << ly
      << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
      << "<text x=\"" << W - right + 36 << "\" y=\"" << ly + 4 << "\">" << train::to_string(runs[r].config.regime)
      << " seed " << runs[r].config.seed << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

ReportFiles report_tables(const std::vector<train::RunRecord>& runs, const std::filesystem::path& out_dir) {
  const Aggregate agg = aggregate(runs);
  std::filesystem::create_directories(out_dir);
  ReportFiles f{out_dir / "segmap_quality.csv", out_dir / "segmentation_iou.csv", out_dir / "image_quality.csv",
                out_dir / "summary.csv",        out_dir / "tables.txt",           out_dir / "loss_curves.svg"};
  const std::filesystem::path* csv[] = {&f.segmap_csv, &f.segmentation_csv, &f.image_csv};
  const auto ts = tables();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    std::ostringstream o;
    write_table_csv(o, agg, *ts[i].rows);
    write_file(*csv[i], o.str());
  }
  std::ostringstream s;
  write_summary_csv(s, agg);
  write_file(f.summary_csv, s.str());
  write_file(f.text, render_text(agg));
  write_file(f.loss_plot, loss_curve_svg(runs));
  return f;
}

void write_metrics_csv(std::ostream& out, const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  out << kMetricsCsvHeader << "\n";
  for (const auto& [scope, r] : rows) {
    out << scope;
    for (double v : {r.psnr, r.ssim, r.mse, r.iou_cl, r.iiou_cl, r.iou_ca, r.iiou_ca, r.seg_psnr, r.seg_ssim, r.seg_loss})
      out << "," << full(v);
    out << "\n";
  }
}

}  // namespace dfs::report
