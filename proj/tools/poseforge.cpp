// poseforge command-line front end: synth, train, screen, eval, plot.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "poseforge/screen.hpp"
#include "poseforge/train.hpp"

namespace fs = std::filesystem;
using namespace poseforge;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot read " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os << text;
}

Vec3 parse_center(const std::string& s) {
  Vec3 c{};
  std::stringstream ss(s);
  std::string part;
  int k = 0;
  while (std::getline(ss, part, ',')) {
    if (k == 3) break;
    try {
      c[k++] = std::stod(part);
    } catch (const std::exception&) {
      throw ContractError("--center expects x,y,z, got '" + s + "'");
    }
  }
  if (k != 3) throw ContractError("--center expects x,y,z, got '" + s + "'");
  return c;
}

void synth_params_from_json(const nlohmann::json& j, SynthParams& p) {
  p.n_min = j.value("n_min", p.n_min);
  p.n_max = j.value("n_max", p.n_max);
  p.m_min = j.value("m_min", p.m_min);
  p.m_max = j.value("m_max", p.m_max);
  p.ring_probability = j.value("ring_probability", p.ring_probability);
  p.max_rotation_deg = j.value("max_rotation_deg", p.max_rotation_deg);
  p.frame_offset = j.value("frame_offset", p.frame_offset);
}

nlohmann::json default_train_file() {
  const SynthParams sp;
  return {{"model", ModelConfig::desk()},
          {"train", TrainConfig{}},
          {"data",
           {{"count", 64},
            {"seed", 1},
            {"n_min", sp.n_min},
            {"n_max", sp.n_max},
            {"m_min", sp.m_min},
            {"m_max", sp.m_max},
            {"ring_probability", sp.ring_probability},
            {"max_rotation_deg", sp.max_rotation_deg},
            {"frame_offset", sp.frame_offset}}}};
}

// ---- synth ----

struct SynthArgs {
  std::size_t count = 10;
  std::uint64_t seed = 1;
  std::string out_dir;
};

int run_synth(const SynthArgs& a) {
  fs::create_directories(a.out_dir);
  const auto data = synth_dataset(a.count, a.seed);
  std::string library, truth;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& c = data[i];
    const fs::path dir = fs::path(a.out_dir) / c.ligand.name;
    fs::create_directories(dir);
    MoleculeGraph gt = c.ligand;
    gt.coords = c.gt_coords;
    write_file(dir / "ligand.sdf", write_sdf(c.ligand));
    write_file(dir / "ground_truth.sdf", write_sdf(gt));
    write_file(dir / "pocket.pdb", write_pdb(c.pocket));
    const Vec3 center = centroid(c.gt_coords);
    write_file(dir / "center.txt", fmt::format("{:.4f},{:.4f},{:.4f}\n", center[0], center[1], center[2]));
  }
  std::cout << fmt::format("wrote {} complexes to {}\n", data.size(), a.out_dir);
  return 0;
}

// ---- train ----

struct TrainArgs {
  std::string phase = "both";
  std::string config;
  std::string out = "weights.pfw";
  std::string log;
  std::string init;
  bool print_config = false;
};

int run_train(const TrainArgs& a) {
  if (a.print_config) {
    std::cout << default_train_file().dump(2) << "\n";
    return 0;
  }
  nlohmann::json file = default_train_file();
  if (!a.config.empty()) {
    const auto user = nlohmann::json::parse(read_file(a.config));
    for (auto it = user.begin(); it != user.end(); ++it) {
      if (!file.contains(it.key())) throw ContractError("unknown config section '" + it.key() + "'");
      file[it.key()].update(it.value());
    }
  }
  const auto model_config = file["model"].get<ModelConfig>();
  const auto train_config = file["train"].get<TrainConfig>();
  SynthParams sp;
  synth_params_from_json(file["data"], sp);
  auto split = split_dataset(synth_dataset(file["data"].value("count", 64),
                                           file["data"].value("seed", std::uint64_t{1}), sp));
  std::unique_ptr<DockModel> model;
  if (!a.init.empty()) model = DockModel::load(a.init);
  else model = std::make_unique<DockModel>(model_config);
  if (a.phase == "2" && a.init.empty()) {
    throw ContractError("--phase 2 needs --init with phase-1 weights");
  }

  std::ofstream log;
  StepCallback logger;
  if (!a.log.empty()) {
    log.open(a.log);
    if (!log) throw Error("cannot write " + a.log);
    logger = csv_logger(log);
  }
  std::cout << fmt::format("training on {} complexes ({} validation), {} parameters\n",
                           split.train.size(), split.validation.size(),
                           model->params().scalar_count());
  if (a.phase == "1" || a.phase == "both") {
    train_phase1(*model, split.train, train_config, logger);
    const auto l = mean_loss(*model, split.validation.empty() ? split.train : split.validation, 1);
    std::cout << fmt::format("phase 1 done: L_dist {:.4f}\n", l.total);
  }
  if (a.phase == "2" || a.phase == "both") {
    const auto rep = train_phase2(*model, split.train, split.validation, train_config, logger);
    std::cout << fmt::format("phase 2 done after {} steps{}\n", rep.steps_run,
                             rep.early_stopped ? " (early stop)" : "");
  }
  model->save(a.out);
  std::cout << "saved " << a.out << "\n";
  return 0;
}

// ---- screen ----

struct ScreenArgs {
  std::string pocket, center, library, weights, out = "ranked.csv", poses_dir, postprocess = "none";
  std::string ground_truth;
  double radius = 6.0;
  std::size_t top_k = 0, batch_size = 8;
  std::uint64_t seed = 1;
  int threads = 0;
};

int run_screen(const ScreenArgs& a) {
  const auto model = DockModel::load(a.weights);
  const Vec3 center = parse_center(a.center);
  const MoleculeGraph pocket = parse_pocket_pdb(read_file(a.pocket), center, a.radius);
  const auto library = parse_sdf_library(read_file(a.library));
  std::map<std::string, std::vector<Vec3>> truth;
  if (!a.ground_truth.empty()) {
    for (const auto& rec : parse_sdf_library(read_file(a.ground_truth))) {
      if (rec.graph) truth[rec.id] = rec.graph->coords;
    }
  }
  ScreenOptions opt;
  opt.postprocess = parse_postprocess(a.postprocess);
  opt.batch_size = a.batch_size;
  opt.threads = a.threads;
  opt.poses_dir = a.poses_dir;
  opt.top_k = a.top_k;
  const auto results = screen_library(*model, pocket, library, opt, truth.empty() ? nullptr : &truth);
  std::ofstream os(a.out);
  if (!os) throw Error("cannot write " + a.out);
  write_screen_csv(os, results);
  std::size_t failed = 0;
  for (const auto& r : results) failed += r.ok() ? 0 : 1;
  std::cout << fmt::format("screened {} ligands ({} failed) -> {}\n", results.size(), failed, a.out);
  return 0;
}

// ---- eval ----

struct EvalArgs {
  std::string pred_dir, gt_dir, out = "report.json";
  double threshold = 2.0;
};

int run_eval(const EvalArgs& a) {
  std::map<std::string, std::vector<Vec3>> truth;
  for (const auto& entry : fs::directory_iterator(a.gt_dir)) {
    if (entry.path().extension() != ".sdf") continue;
    for (const auto& rec : parse_sdf_library(read_file(entry.path().string()))) {
      if (rec.graph) truth[rec.id] = rec.graph->coords;
    }
  }
  std::vector<EvalEntry> entries;
  for (const auto& entry : fs::directory_iterator(a.pred_dir)) {
    if (entry.path().extension() != ".json") continue;
    const auto j = nlohmann::json::parse(read_file(entry.path().string()));
    const std::string name = j.at("name").get<std::string>();
    auto it = truth.find(name);
    if (it == truth.end()) {
      std::cerr << "no ground truth for " << name << ", skipped\n";
      continue;
    }
    std::vector<Vec3> coords;
    for (const auto& p : j.at("coords")) coords.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
    entries.push_back({name, rmsd(coords, it->second), j.at("confidence").get<double>()});
  }
  if (entries.empty()) throw ContractError("eval: no prediction matched a ground-truth structure");
  std::sort(entries.begin(), entries.end(), [](const auto& x, const auto& y) { return x.id < y.id; });
  write_file(a.out, eval_report_json(entries, a.threshold));
  std::cout << fmt::format("evaluated {} poses -> {}\n", entries.size(), a.out);
  return 0;
}

// ---- plot ----

struct PlotArgs {
  std::vector<std::string> reports, labels;
  std::string out = "rmsd.svg";
  double x_max = 10.0;
};

int run_plot(const PlotArgs& a) {
  std::vector<std::pair<std::string, std::vector<double>>> series;
  for (std::size_t i = 0; i < a.reports.size(); ++i) {
    const auto j = nlohmann::json::parse(read_file(a.reports[i]));
    std::vector<double> v;
    for (const auto& e : j.at("entries")) v.push_back(e.at("rmsd").get<double>());
    series.emplace_back(i < a.labels.size() ? a.labels[i] : fs::path(a.reports[i]).stem().string(), v);
  }
  write_file(a.out, cumulative_rmsd_svg(series, a.x_max));
  std::cout << "wrote " << a.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"poseforge: pocket-conditioned ligand pose prediction and screening"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "write synthetic complexes (SDF/PDB)");
  synth->add_option("--count", sa.count, "number of complexes");
  synth->add_option("--seed", sa.seed, "generator seed");
  synth->add_option("--out-dir", sa.out_dir, "output directory")->required();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "two-phase training on synthetic complexes");
  train->add_option("--phase", ta.phase, "1, 2 or both")->check(CLI::IsMember({"1", "2", "both"}));
  train->add_option("--config", ta.config, "JSON file with model/train/data sections");
  train->add_option("--out", ta.out, "weights file to write");
  train->add_option("--log", ta.log, "loss curve CSV");
  train->add_option("--init", ta.init, "starting weights (required for --phase 2)");
  train->add_flag("--print-config", ta.print_config, "print the default config and exit");

  ScreenArgs sc;
  auto* screen = app.add_subcommand("screen", "rank a ligand library against one pocket");
  screen->add_option("--pocket", sc.pocket, "pocket PDB")->required();
  screen->add_option("--center", sc.center, "pocket center x,y,z")->required();
  screen->add_option("--radius", sc.radius, "pocket radius around the center (A)");
  screen->add_option("--library", sc.library, "ligand SDF library")->required();
  screen->add_option("--weights", sc.weights, "trained weights")->required();
  screen->add_option("--out", sc.out, "ranked CSV");
  screen->add_option("--poses-dir", sc.poses_dir, "directory for SDF/JSON poses");
  screen->add_option("--postprocess", sc.postprocess, "none, em or pcf")
      ->check(CLI::IsMember({"none", "em", "pcf"}));
  screen->add_option("--top-k", sc.top_k, "write poses for the best K only (0 = all)");
  screen->add_option("--batch-size", sc.batch_size, "ligands per worker batch");
  screen->add_option("--seed", sc.seed, "accepted for reproducibility records; inference is deterministic");
  screen->add_option("--threads", sc.threads, "worker threads (0 = default)");
  screen->add_option("--ground-truth", sc.ground_truth, "SDF with reference poses keyed by record id");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "success rate, AUC and confidence/RMSD regression");
  eval->add_option("--pred-dir", ea.pred_dir, "directory of pose JSON records")->required();
  eval->add_option("--gt-dir", ea.gt_dir, "directory of reference SDF files")->required();
  eval->add_option("--out", ea.out, "report JSON");
  eval->add_option("--threshold", ea.threshold, "success RMSD threshold (A)");

  PlotArgs pa;
  auto* plot = app.add_subcommand("plot", "cumulative RMSD curves to SVG");
  plot->add_option("--report", pa.reports, "eval report JSON (repeatable)")->required();
  plot->add_option("--label", pa.labels, "series label (repeatable)");
  plot->add_option("--out", pa.out, "SVG file");
  plot->add_option("--x-max", pa.x_max, "largest RMSD on the x axis");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*synth) return run_synth(sa);
    if (*train) return run_train(ta);
    if (*screen) return run_screen(sc);
    if (*eval) return run_eval(ea);
    if (*plot) return run_plot(pa);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
