#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "dfs/error.hpp"
#include "dfs/report.hpp"
#include "support/tempdir.hpp"

namespace dfs {
namespace {

using metrics::Arm;
using metrics::MetricsReport;
using testing::TempDir;

MetricsReport rep(Arm arm, double base) {
  MetricsReport r;
  r.arm = arm;
  r.psnr = 20 + base;
  r.ssim = 0.5 + base / 100;
  r.mse = 0.01 * (1 + base);
  r.iou_cl = 0.4 + base / 50;
  r.iiou_cl = 0.3 + base / 50;
  r.iou_ca = 0.6;
  r.iiou_ca = 0.55;
  r.seg_psnr = 15 + base;
  r.seg_ssim = 0.7;
  r.seg_loss = 1.0 - base / 10;
  return r;
}

train::RunRecord record(train::Regime regime, std::uint64_t seed, const std::string& test_id,
                        std::map<Arm, MetricsReport> reports, int steps = 30) {
  train::RunRecord r;
  r.config = train::TrainConfig::defaults(regime, models::Profile::tiny);
  r.config.seed = seed;
  r.test_id = test_id;
  r.test_reports = std::move(reports);
  for (int i = 0; i < steps; ++i) {
    losses::LossBreakdown b;
    b.total = 5.0 / (1 + i) + 0.01 * static_cast<double>(seed);
    r.step_log.push_back(b);
  }
  return r;
}

std::vector<train::RunRecord> two_seeds() {
  return {record(train::Regime::dehaze, 1, "abc", {{Arm::dehaze, rep(Arm::dehaze, 1)}}),
          record(train::Regime::dfs, 1, "abc", {{Arm::hazy, rep(Arm::hazy, 0)}, {Arm::dfs, rep(Arm::dfs, 2)},
                                                {Arm::gt, rep(Arm::gt, 10)}}),
          record(train::Regime::dehaze, 2, "abc", {{Arm::dehaze, rep(Arm::dehaze, 3)}}),
          record(train::Regime::dfs, 2, "abc", {{Arm::hazy, rep(Arm::hazy, 0)}, {Arm::dfs, rep(Arm::dfs, 4)},
                                                {Arm::gt, rep(Arm::gt, 10)}})};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

TEST(Aggregate, MeansAndPopulationSpreadPerArm) {
  const auto agg = report::aggregate(two_seeds());
  EXPECT_EQ(agg.test_id, "abc");
  ASSERT_EQ(agg.arms.size(), 4u);
  const auto& d = agg.arms.at(Arm::dehaze);
  EXPECT_EQ(d.runs, 2);
  EXPECT_DOUBLE_EQ(d.mean.psnr, 22.0);  // 21 and 23
  EXPECT_DOUBLE_EQ(d.stddev.psnr, 1.0);
  EXPECT_DOUBLE_EQ(d.mean.seg_loss, 0.8);
  EXPECT_NEAR(d.stddev.seg_loss, 0.1, 1e-15);
  EXPECT_EQ(agg.arms.at(Arm::hazy).stddev.psnr, 0.0);
  EXPECT_DOUBLE_EQ(agg.arms.at(Arm::dfs).mean.iou_cl, 0.4 + 3.0 / 50);
}

TEST(Aggregate, RefusesEmptyUnevaluatedAndMixedTestSets) {
  EXPECT_THROW(report::aggregate({}), ValidationError);
  auto runs = two_seeds();
  runs.push_back(record(train::Regime::dfs, 3, "abc", {}));
  EXPECT_THROW(report::aggregate(runs), ValidationError);
  runs = two_seeds();
  runs[2].test_id = "xyz";
  try {
    report::aggregate(runs);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("refusing"), std::string::npos);
  }
}

TEST(Tables, ColumnOrderIsHazyDehazeDfsGt) {
  const auto agg = report::aggregate(two_seeds());
  for (const auto* rows : {&report::segmap_rows(), &report::segmentation_rows(), &report::image_rows()}) {
    std::ostringstream o;
    report::write_table_csv(o, agg, *rows);
    std::istringstream in(o.str());
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "Metrics,Hazy,Dehaze,DFS,GT");
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) ++n;
    EXPECT_EQ(n, rows->size());
  }
  std::ostringstream o;
  report::write_table_csv(o, agg, report::image_rows());
  EXPECT_NE(o.str().find("PSNR,20,22,23,30\n"), std::string::npos) << o.str();
}

TEST(Tables, RowSets) {
  auto labels = [](const std::vector<report::Row>& rows) {
    std::string s;
    for (const auto& r : rows) s += r.label + ";";
    return s;
  };
  EXPECT_EQ(labels(report::segmap_rows()), "PSNR;SSIM;");
  EXPECT_EQ(labels(report::segmentation_rows()), "IoU-cl;iIoU-cl;IoU-ca;iIoU-ca;");
  EXPECT_EQ(labels(report::image_rows()), "PSNR;SSIM;MSE;seg loss;");
}

TEST(Tables, MissingArmIsAnEmptyCell) {
  auto runs = two_seeds();
  runs.erase(runs.begin() + 2);
  runs.erase(runs.begin());
  std::ostringstream o;
  report::write_table_csv(o, report::aggregate(runs), report::segmap_rows());
  EXPECT_NE(o.str().find("PSNR,15,,18,25\n"), std::string::npos) << o.str();
}

TEST(ReportTables, IsAPureFunctionOfTheRecords) {
  TempDir a("rep"), b("rep");
  const auto runs = two_seeds();
  const auto fa = report::report_tables(runs, a.path());
  // records that went through their JSON form give the same files
  std::vector<train::RunRecord> reloaded;
  for (const auto& r : runs) reloaded.push_back(train::RunRecord::from_json(r.to_json()));
  const auto fb = report::report_tables(reloaded, b.path());
  for (auto [x, y] : {std::pair{fa.segmap_csv, fb.segmap_csv}, {fa.segmentation_csv, fb.segmentation_csv},
                      {fa.image_csv, fb.image_csv}, {fa.summary_csv, fb.summary_csv}, {fa.text, fb.text},
                      {fa.loss_plot, fb.loss_plot}}) {
    ASSERT_TRUE(std::filesystem::exists(x)) << x;
    EXPECT_EQ(slurp(x), slurp(y)) << x.filename();
    EXPECT_FALSE(slurp(x).empty());
  }
  const std::string text = slurp(fa.text);
  EXPECT_NE(text.find("22.00 ± 1.00"), std::string::npos) << text;
  EXPECT_NE(text.find("2 runs"), std::string::npos);
  const std::string summary = slurp(fa.summary_csv);
  EXPECT_EQ(summary.substr(0, summary.find('\n')), "table,metric,arm,mean,std,runs");
  EXPECT_NE(summary.find("image,PSNR,Dehaze,22,1,2\n"), std::string::npos) << summary;
}

TEST(LossPlot, OnePolylinePerRecord) {
  const auto svg = report::loss_curve_svg(two_seeds());
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  std::size_t n = 0;
  for (auto p = svg.find("<polyline"); p != std::string::npos; p = svg.find("<polyline", p + 1)) ++n;
  EXPECT_EQ(n, 4u);
  EXPECT_NE(svg.find("dfs seed 2"), std::string::npos);
  // a record without steps still renders
  auto runs = two_seeds();
  runs[0].step_log.clear();
  EXPECT_NE(report::loss_curve_svg(runs).find("</svg>"), std::string::npos);
}

TEST(MetricsCsv, VersionedHeaderAndNan) {
  std::ostringstream o;
  auto r = rep(Arm::dfs, 0);
  r.psnr = std::nan("");
  report::write_metrics_csv(o, {{"DFS", r}, {"all", rep(Arm::gt, 1)}});
  const std::string s = o.str();
  EXPECT_EQ(s.rfind("# dfs metrics csv v1\nscope,psnr,ssim,mse,iou_cl,iiou_cl,iou_ca,iiou_ca,seg_psnr,seg_ssim,seg_loss\n", 0),
            0u);
  EXPECT_NE(s.find("\nDFS,nan,0.5,"), std::string::npos) << s;
  EXPECT_NE(s.find("\nall,21,"), std::string::npos) << s;
}

}  // namespace
}  // namespace dfs
