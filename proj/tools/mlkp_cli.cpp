// Command-line front end: gradient checking, oracle verification, toy-scale
// training/evaluation, detection export and synthetic dataset generation.

#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "mlkp/check_suites.hpp"
#include "mlkp/config.hpp"
#include "mlkp/detector.hpp"
#include "mlkp/serialize.hpp"
#include "mlkp/train.hpp"

namespace {

using namespace mlkp;

RunConfig loadConfig(const std::string& path) {
  if (path.empty()) return RunConfig{};  // built-in defaults
  return RunConfig::parseFile(path);
}

void writeReport(const std::string& path, const std::string& text) {
  if (path.empty()) return;
  std::ofstream f(path);
  MLKP_IO_CHECK(f.good(), "cannot open report file '" << path << "'");
  f << text;
}

int runGradcheck(const std::string& config_path, double tolerance) {
  const RunConfig cfg = loadConfig(config_path);
  auto battery = checks::standardBattery(cfg.train_seed, 1e-4, tolerance);
  std::ostringstream report;
  bool all_pass = true;
  for (const auto& [name, result] : battery) {
    report << "== " << name << " ==\n" << result.render() << "\n";
    all_pass = all_pass && result.pass;
  }
  report << (all_pass ? "gradcheck PASS" : "gradcheck FAIL") << " at tolerance "
         << tolerance << "\n";
  std::cout << report.str();
  writeReport(cfg.report_out, report.str());
  return all_pass ? 0 : 1;
}

int runOracle(const std::string& config_path, int trials) {
  const RunConfig cfg = loadConfig(config_path);
  const double tol = 1e-10;
  std::ostringstream report;
  bool pass = true;
  for (int order : {2, 3}) {
    const double err =
        checks::kernelOracleMaxErr(cfg.train_seed + order, order, trials);
    report << "kernel_oracle order=" << order << " trials=" << trials
           << " max_rel_err=" << std::scientific << err << " "
           << (err <= tol ? "ok" : "FAIL") << "\n";
    pass = pass && err <= tol;
  }
  const double perr = checks::predictorOracleMaxErr(cfg.train_seed, 2 * trials);
  report << "predictor_oracle trials=" << 2 * trials
         << " max_rel_err=" << std::scientific << perr << " "
         << (perr <= tol ? "ok" : "FAIL") << "\n";
  pass = pass && perr <= tol;
  report << (pass ? "oracle PASS" : "oracle FAIL") << "\n";
  std::cout << report.str();
  writeReport(cfg.report_out, report.str());
  return pass ? 0 : 1;
}

int runTrain(const std::string& config_path, const std::string& out_path) {
  RunConfig cfg = loadConfig(config_path);
  if (!out_path.empty()) cfg.weights_out = out_path;
  cfg.validate();

  Detector<double> det(Detector<double>::Config::fromRun(cfg), cfg.train_seed);
  if (!cfg.weights_in.empty()) loadWeights(det.params(), cfg.weights_in);

  try {
    TrainStats stats = trainDetector(det, cfg, &std::cout);
    saveWeights(det.params(), cfg.weights_out);
    std::cout << "weights written to " << cfg.weights_out << "\n";
    std::string log;
    for (const auto& line : stats.log_lines) log += line + "\n";
    writeReport(cfg.report_out, log);
    return 0;
  } catch (const TrainingDiverged& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return 1;
  }
}

int runEval(const std::string& config_path, const std::string& weights_path,
            const std::string& report_path) {
  const RunConfig cfg = loadConfig(config_path);
  Detector<double> det(Detector<double>::Config::fromRun(cfg), cfg.train_seed);
  loadWeights(det.params(), weights_path);
  auto result = evaluateDetector(det, cfg);
  std::ostringstream report;
  report << "map50=" << std::fixed << std::setprecision(6) << result.map
         << "\n";
  for (const auto& [cls, ap] : result.ap_per_class)
    report << "ap.class" << cls << "=" << std::fixed << std::setprecision(6)
           << ap << "\n";
  std::cout << report.str();
  writeReport(report_path.empty() ? cfg.report_out : report_path, report.str());
  return 0;
}

int runExportDetections(const std::string& config_path,
                        const std::string& weights_path,
                        const std::string& out_path) {
  const RunConfig cfg = loadConfig(config_path);
  Detector<double> det(Detector<double>::Config::fromRun(cfg), cfg.train_seed);
  loadWeights(det.params(), weights_path);

  const SceneSpec sspec = cfg.sceneSpec();
  ProposalSpec pspec = cfg.proposalSpec();
  pspec.seed = mix_seed(cfg.train_seed, 0x45564cULL);

  std::ofstream out(out_path);
  MLKP_IO_CHECK(out.good(), "cannot open '" << out_path << "' for writing");
  for (Index i = 0; i < cfg.eval_scenes; ++i) {
    const Scene scene = generateScene(sspec, cfg.train_scenes + i);
    const auto proposals =
        generateProposals(scene, sspec, pspec, static_cast<std::uint64_t>(i));
    std::vector<Box> boxes;
    for (const auto& p : proposals) boxes.push_back(p.box);
    for (const auto& d :
         det.detect(normalizeImage(scene.image), boxes, static_cast<int>(i)))
      out << formatDetection(d) << "\n";
  }
  MLKP_IO_CHECK(out.good(), "write to '" << out_path << "' failed");
  std::cout << "detections written to " << out_path << "\n";
  return 0;
}

int runGenData(const std::string& config_path, const std::string& out_dir) {
  const RunConfig cfg = loadConfig(config_path);
  const SceneSpec sspec = cfg.sceneSpec();
  std::filesystem::create_directories(out_dir);
  std::ofstream ann(out_dir + "/annotations.txt");
  MLKP_IO_CHECK(ann.good(), "cannot write annotations in '" << out_dir << "'");
  for (Index i = 0; i < cfg.train_scenes; ++i) {
    const Scene scene = generateScene(sspec, i);
    char name[64];
    std::snprintf(name, sizeof(name), "scene_%05lld.ppm",
                  static_cast<long long>(i));
    saveScenePPM(scene, out_dir + "/" + name);
    for (size_t g = 0; g < scene.gt_boxes.size(); ++g) {
      const auto& b = scene.gt_boxes[g];
      ann << i << " " << scene.gt_labels[g] << " " << std::fixed
          << std::setprecision(6) << b[0] << " " << b[1] << " " << b[2] << " "
          << b[3] << "\n";
    }
  }
  std::cout << cfg.train_scenes << " scenes written to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-scale location-aware kernel representation toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_path, weights_path, report_path, out_dir;
  double tolerance = 1e-5;
  int trials = 50;

  auto* gradcheck = app.add_subcommand(
      "gradcheck", "finite-difference checks of all analytic gradients");
  gradcheck->add_option("--config", config_path, "config file");
  gradcheck->add_option("--tolerance", tolerance, "relative error tolerance");

  auto* oracle = app.add_subcommand(
      "oracle", "brute-force kernel and predictor equivalence checks");
  oracle->add_option("--config", config_path, "config file");
  oracle->add_option("--trials", trials, "random instances per check");

  auto* train = app.add_subcommand("train", "train the toy detector");
  train->add_option("--config", config_path, "config file");
  train->add_option("--out", out_path, "weight archive output path");

  auto* eval =
      app.add_subcommand("eval", "evaluate mAP@0.5 on held-out scenes");
  eval->add_option("--config", config_path, "config file");
  eval->add_option("--weights", weights_path, "weight archive")->required();
  eval->add_option("--report", report_path, "report output path");

  auto* exportd = app.add_subcommand("export-detections",
                                     "run inference and export detections");
  exportd->add_option("--config", config_path, "config file");
  exportd->add_option("--weights", weights_path, "weight archive")->required();
  exportd->add_option("--out", out_path, "detections output path")->required();

  auto* gendata =
      app.add_subcommand("gen-data", "write synthetic scenes and annotations");
  gendata->add_option("--config", config_path, "config file");
  gendata->add_option("--out-dir", out_dir, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gradcheck->parsed()) return runGradcheck(config_path, tolerance);
    if (oracle->parsed()) return runOracle(config_path, trials);
    if (train->parsed()) return runTrain(config_path, out_path);
    if (eval->parsed()) return runEval(config_path, weights_path, report_path);
    if (exportd->parsed())
      return runExportDetections(config_path, weights_path, out_path);
    if (gendata->parsed()) return runGenData(config_path, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
