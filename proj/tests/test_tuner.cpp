#include "balbot/tuner.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include <gtest/gtest.h>

#include "balbot/config.hpp"

namespace {

using namespace balbot;

constexpr double kPi = std::numbers::pi;

TuneReport goldenReport() {
  std::ifstream in(BALBOT_TEST_DATA_DIR "/golden/tune_report.json");
  return nlohmann::json::parse(in).get<TuneReport>();
}

// Tuning is deterministic and takes a couple of seconds; share one run.
const TuneReport& tuned() {
  static const TuneReport r = tuneGains(standardScenario());
  return r;
}

TEST(TunerTest, Grids) {
  const auto g = logGrid(10.0, 1e5, 5);
  ASSERT_EQ(g.size(), 5u);
  EXPECT_DOUBLE_EQ(g.front(), 10.0);
  EXPECT_NEAR(g[1], 100.0, 1e-9);
  EXPECT_NEAR(g.back(), 1e5, 1e-7);
  EXPECT_EQ(linearGrid(0.0, 1.0, 5), (std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0}));
  EXPECT_EQ(linearGrid(3.0, 4.0, 1), std::vector<double>{3.0});
}

TEST(TunerTest, SummaryOfSyntheticRun) {
  SimConfig cfg = standardScenario();
  cfg.durationS = 0.01;
  detail::TrialRun run;
  for (int i = 0; i < 10; ++i) {
    run.timeUs.push_back(i * 1000);
    const double e = i < 4 ? 0.1 * (i % 2 ? -1 : 1) : 0.0;
    run.error.push_back(e);
    run.pitch.push_back(i >= 5 ? (i % 2 ? 1.0 : -1.0) : 0.0);
  }
  run.posX = -0.3;
  TunerOptions opt;
  opt.lateWindowS = 0.005;
  const TrialMetrics m = detail::summarize(run, cfg, opt);
  EXPECT_FALSE(m.fallen);
  EXPECT_DOUBLE_EQ(m.driftM, 0.3);
  EXPECT_DOUBLE_EQ(m.settleTimeS, 0.004);
  EXPECT_DOUBLE_EQ(m.firstCrossingS, 0.001);
  EXPECT_DOUBLE_EQ(m.oscillationAmp, std::sqrt(0.96));  // five samples, mean 0.2
  EXPECT_DOUBLE_EQ(m.peakErrorLate, 0.0);
}

TEST(TunerTest, ReproducesGoldenReport) {
  const TuneReport golden = goldenReport();
  const TuneReport& r = tuned();
  EXPECT_EQ(r.gains, golden.gains);
  EXPECT_EQ(r.metrics, golden.metrics);
  EXPECT_EQ(r.trialCount, golden.trialCount);
  ASSERT_EQ(r.stages.size(), golden.stages.size());
  for (std::size_t i = 0; i < r.stages.size(); ++i) EXPECT_EQ(r.stages[i].chosen, golden.stages[i].chosen);
}

TEST(TunerTest, TunedGainsSatisfyCriterion) {
  const TuneReport& r = tuned();
  EXPECT_FALSE(r.metrics.fallen);
  EXPECT_LT(r.metrics.peakErrorLate, kPi / 18);
  EXPECT_GT(r.gains.angle.kp, 0.0);
  EXPECT_GT(r.gains.angle.kd, 0.0);
  ASSERT_EQ(r.stages.size(), 6u);
  EXPECT_EQ(r.stages[0].name, "angle.kp");
  EXPECT_EQ(r.stages[5].name, "angle.ki");
}

TEST(TunerTest, ThreadedBatchMatchesSerial) {
  SimConfig scenario = standardScenario();
  scenario.durationS = 1.0;
  std::vector<CascadeGains> cands;
  for (double kp : {100.0, 262.0, 500.0, 1000.0, 2000.0}) cands.push_back({{kp, kp / 9, 0}, {}});
  TunerOptions serial, threaded;
  threaded.threads = 3;
  EXPECT_EQ(evaluateBatch(cands, scenario, serial), evaluateBatch(cands, scenario, threaded));
}

TEST(TunerTest, DetunedGainsFail) {
  const CascadeGains g = tuned().gains;
  CascadeGains soft = g;
  soft.angle.kp *= 0.05;
  SimConfig five = standardScenario();
  five.durationS = 5.0;
  EXPECT_TRUE(evaluateGains(soft, five).fallen);

  CascadeGains stiff = g;
  stiff.angle.kp *= 10;
  stiff.angle.kd = 0.0;
  const TrialMetrics m = evaluateGains(stiff, standardScenario());
  EXPECT_TRUE(m.fallen || m.oscillationAmp >= 2 * tuned().metrics.oscillationAmp);
}

TEST(TunerTest, StopsEarlyOnFallButKeepsFullLength) {
  SimConfig cfg = standardScenario();
  cfg.gains = {PidGains{}, PidGains{}};
  const auto run = detail::runTrial(cfg);
  EXPECT_TRUE(run.fallen);
  EXPECT_EQ(run.timeUs.size(), 10'000u);
  EXPECT_EQ(run.timeUs.back(), 9'999'000);
}

TEST(TunerTest, DisturbanceSweepBracketsRecovery) {
  const CascadeGains g = tuned().gains;
  const SimConfig scenario = standardScenario();
  const double max = disturbanceSweep(g, scenario);
  EXPECT_GT(max, 0.0);
  SimConfig cfg = scenario;
  cfg.gains = g;
  cfg.durationS = 5.0;
  const auto run = detail::runTrial(cfg, Disturbance{2'000'000, 2 * max});
  EXPECT_TRUE(run.fallen || std::abs(run.error.back()) >= kPi / 18);
}

TEST(TunerTest, NoisierSensorNeverRaisesTolerance) {
  const CascadeGains g = tuned().gains;
  double prev = std::numeric_limits<double>::infinity();
  for (double sigma : {0.0, 0.002, 0.01, 0.03}) {
    SimConfig s = standardScenario();
    s.imu.noiseSigma = sigma;
    const double v = disturbanceSweep(g, s, 2.0, 3.0, 0.05);
    EXPECT_LE(v, prev + 0.05) << sigma;
    prev = v;
  }
}

TEST(TunerTest, ReplaySummary) {
  SimConfig cfg = standardScenario();
  cfg.gains = tuned().gains;
  cfg.durationS = 1.0;
  const auto rows = runSimulation(cfg).rows;
  const TraceSummary s = summarizeTrace(rows);
  EXPECT_EQ(s.rows, 1000u);
  EXPECT_DOUBLE_EQ(s.durationS, 0.999);
  EXPECT_FALSE(s.fallen);
  EXPECT_EQ(s.fallTimeS, -1.0);
  EXPECT_GT(s.balancingFraction, 0.99);
  EXPECT_LE(s.accelMaxAbs, 200.0);
  EXPECT_EQ(summarizeTrace({}).rows, 0u);
}

}  // namespace
