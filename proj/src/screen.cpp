#include "poseforge/screen.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace poseforge {

PostProcess parse_postprocess(const std::string& name) {
  if (name == "none") return PostProcess::kNone;
  if (name == "em") return PostProcess::kEm;
  if (name == "pcf") return PostProcess::kPcf;
  throw ContractError("unknown postprocess '" + name + "' (expected none, em or pcf)");
}

namespace {

std::string safe_file_stem(const std::string& id, std::size_t index) {
  std::string s;
  for (char c : id) s += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  if (s.empty()) s = "ligand";
  return fmt::format("{:04d}_{}", index, s);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else {
      out.back() += c;
    }
  }
  return out;
}

}  // namespace

ScreenResult dock_ligand(const DockModel& model, const MoleculeGraph& ligand,
                         const MoleculeGraph& pocket, const ScreenOptions& options,
                         const std::vector<Vec3>* ground_truth) {
  const auto start = std::chrono::steady_clock::now();
  ScreenResult r;
  r.ligand_id = ligand.name;
  ag::NoGradScope no_grad;
  const bool e2e = model.config().end_to_end_decode;
  const ForwardResult f = model.forward(ligand, pocket, e2e);
  r.confidence = f.confidence.scalar;
  if (e2e) {
    r.pose = f.pose();
    r.decode_iterations = f.structure.coords.size() - 1;
  } else {
    std::vector<double> intra = f.intra_values(), inter = f.inter_values();
    for (double& d : intra) d = std::max(d, 0.0);
    for (double& d : inter) d = std::max(d, 0.0);
    const Pose init = init_pose(ligand, pocket);
    r.pose = distance_fit(intra, inter, init.coords_per_layer[0], pocket.coords, options.fit);
    r.decode_iterations = options.fit.iterations;
  }
  switch (options.postprocess) {
    case PostProcess::kNone: break;
    case PostProcess::kEm: r.pose = em_minimize(r.pose, ligand, pocket, options.em).coords; break;
    case PostProcess::kPcf: r.pose = pcf_correct(r.pose, ligand); break;
  }
  r.plausibility = plausibility_report(r.pose, ligand, pocket);
  if (ground_truth) r.rmsd = rmsd(r.pose, *ground_truth);
  r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::vector<ScreenResult> screen_library(
    const DockModel& model, const MoleculeGraph& pocket, const std::vector<SdfRecord>& library,
    const ScreenOptions& options, const std::map<std::string, std::vector<Vec3>>* ground_truth) {
  if (pocket.size() == 0) throw ContractError("screen_library: empty pocket");
  std::vector<ScreenResult> results(library.size());
  const std::size_t batch = std::max<std::size_t>(1, options.batch_size);
#ifdef _OPENMP
  const int threads = options.threads > 0 ? options.threads : omp_get_max_threads();
#endif
  for (std::size_t begin = 0; begin < library.size(); begin += batch) {
    const std::size_t end = std::min(library.size(), begin + batch);
#pragma omp parallel for schedule(dynamic) num_threads(threads)
    for (std::size_t i = begin; i < end; ++i) {
      const SdfRecord& rec = library[i];
      ScreenResult& r = results[i];
      r.ligand_id = rec.id;
      if (!rec.graph) {
        r.error = rec.error;
        continue;
      }
      try {
        const std::vector<Vec3>* gt = nullptr;
        if (ground_truth) {
          auto it = ground_truth->find(rec.id);
          if (it != ground_truth->end()) gt = &it->second;
        }
        r = dock_ligand(model, *rec.graph, pocket, options, gt);
        r.ligand_id = rec.id;
      } catch (const std::exception& e) {
        r.error = e.what();
      }
    }
  }
  std::vector<std::size_t> order(results.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (results[a].ok() != results[b].ok()) return results[a].ok();
    return results[a].ok() && results[a].confidence > results[b].confidence;
  });
  std::vector<ScreenResult> sorted;
  sorted.reserve(results.size());
  for (std::size_t i : order) sorted.push_back(std::move(results[i]));

  if (!options.poses_dir.empty()) {
    std::filesystem::create_directories(options.poses_dir);
    std::size_t written = 0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      ScreenResult& r = sorted[i];
      if (!r.ok() || (options.top_k > 0 && written >= options.top_k)) continue;
      const auto& rec = *std::find_if(library.begin(), library.end(),
                                      [&](const SdfRecord& s) { return s.id == r.ligand_id && s.graph; });
      const std::string stem = safe_file_stem(r.ligand_id, i + 1);
      const auto base = std::filesystem::path(options.poses_dir) / stem;
      std::ofstream(base.string() + ".sdf") << pose_to_sdf(*rec.graph, r.pose);
      const double* rm = r.rmsd ? &*r.rmsd : nullptr;
      std::ofstream(base.string() + ".json") << pose_to_json(r.ligand_id, r.pose, r.confidence, rm);
      r.pose_path = base.string() + ".sdf";
      ++written;
    }
  }
  return sorted;
}

void write_screen_csv(std::ostream& os, const std::vector<ScreenResult>& results) {
  os << "rank,ligand_id,confidence,rmsd,bond_length_mae,pass_distance,pass_overlap,error\n";
  std::size_t rank = 0;
  for (const auto& r : results) {
    if (!r.ok()) {
      os << fmt::format(",{},,,,,,{}\n", csv_field(r.ligand_id), csv_field(r.error));
      continue;
    }
    os << fmt::format("{},{},{:.6f},{},{:.6f},{},{},\n", ++rank, csv_field(r.ligand_id),
                      r.confidence, r.rmsd ? fmt::format("{:.6f}", *r.rmsd) : "",
                      r.plausibility.bond_length_mae, r.plausibility.pass_distance ? 1 : 0,
                      r.plausibility.pass_overlap ? 1 : 0);
  }
}

std::vector<CsvRow> read_screen_csv(std::istream& is) {
  std::vector<CsvRow> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (lineno == 1 || line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 8) throw ParseError(fmt::format("expected 8 columns, found {}", f.size()), lineno);
    CsvRow r;
    r.ligand_id = f[1];
    if (!f[2].empty()) r.confidence = std::stod(f[2]);
    r.error = f[7];
    rows.push_back(std::move(r));
  }
  return rows;
}

double success_rate(std::span<const double> rmsds, double threshold) {
  if (rmsds.empty()) throw ContractError("success_rate: no poses");
  std::size_t hits = 0;
  for (double r : rmsds) hits += r < threshold ? 1 : 0;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(rmsds.size());
}

double success_rate(const std::vector<std::vector<Vec3>>& poses,
                    const std::vector<std::vector<Vec3>>& gts, double threshold) {
  if (poses.size() != gts.size()) {
    throw ContractError(fmt::format("success_rate: {} poses vs {} references", poses.size(), gts.size()));
  }
  std::vector<double> r;
  for (std::size_t i = 0; i < poses.size(); ++i) r.push_back(rmsd(poses[i], gts[i]));
  return success_rate(r, threshold);
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double roc_auc(std::span<const int> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) throw ContractError("roc_auc: label/score length mismatch");
  std::size_t pos = 0;
  for (int l : labels) pos += l ? 1 : 0;
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw ContractError("roc_auc: undefined with a single class");
  const auto ranks = average_ranks(scores);
  double sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i]) sum += ranks[i];
  const double p = static_cast<double>(pos), n = static_cast<double>(neg);
  return (sum - p * (p + 1.0) / 2.0) / (p * n);
}

double pearson(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

double spearman(std::span<const double> x, std::span<const double> y) {
  const auto rx = average_ranks(x), ry = average_ranks(y);
  return pearson(rx, ry);
}

Regression confidence_rmsd_regression(std::span<const double> confidence,
                                      std::span<const double> rmsd_values) {
  if (confidence.size() != rmsd_values.size()) throw ContractError("regression: length mismatch");
  if (confidence.size() < 3) throw ContractError("regression: need at least 3 points");
  Regression r;
  const double n = static_cast<double>(confidence.size());
  const double mx = std::accumulate(confidence.begin(), confidence.end(), 0.0) / n;
  const double my = std::accumulate(rmsd_values.begin(), rmsd_values.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < confidence.size(); ++i) {
    sxy += (confidence[i] - mx) * (rmsd_values[i] - my);
    sxx += (confidence[i] - mx) * (confidence[i] - mx);
  }
  if (sxx == 0.0) {
    r.degenerate = true;
    r.intercept = my;
    return r;
  }
  r.slope = sxy / sxx;
  r.intercept = my - r.slope * mx;
  r.pearson = pearson(confidence, rmsd_values);
  r.spearman = spearman(confidence, rmsd_values);
  return r;
}

std::string eval_report_json(const std::vector<EvalEntry>& entries, double threshold) {
  nlohmann::json j;
  std::vector<double> rm, conf;
  std::vector<int> labels;
  for (const auto& e : entries) {
    rm.push_back(e.rmsd);
    conf.push_back(e.confidence);
    labels.push_back(e.rmsd < threshold ? 1 : 0);
    j["entries"].push_back({{"id", e.id}, {"rmsd", e.rmsd}, {"confidence", e.confidence}});
  }
  j["count"] = entries.size();
  j["threshold"] = threshold;
  j["success_rate"] = entries.empty() ? 0.0 : success_rate(rm, threshold);
  try {
    j["auc"] = roc_auc(labels, conf);
  } catch (const ContractError&) {
    j["auc"] = nullptr;
  }
  if (entries.size() >= 3) {
    const Regression r = confidence_rmsd_regression(conf, rm);
    j["regression"] = {{"slope", r.slope},     {"intercept", r.intercept},
                       {"pearson", r.pearson}, {"spearman", r.spearman},
                       {"degenerate", r.degenerate}};
  } else {
    j["regression"] = nullptr;
  }
  return j.dump(2);
}

std::string cumulative_rmsd_svg(const std::vector<std::pair<std::string, std::vector<double>>>& series,
                                double x_max) {
  const double w = 480, h = 320, left = 50, right = 20, top = 20, bottom = 40;
  const double pw = w - left - right, ph = h - top - bottom;
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" "
      "font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      w, h);
  svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n", left, top + ph, left + pw);
  svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n", left, top, top + ph);
  for (int t = 0; t <= 5; ++t) {
    const double xv = x_max * t / 5.0, x = left + pw * t / 5.0;
    svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{:.0f}</text>\n", x, top + ph + 14, xv);
    const double y = top + ph - ph * t / 5.0;
    svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n", left - 4, y + 4, t * 20);
  }
  svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">RMSD threshold (A)</text>\n", left + pw / 2, h - 6);
  svg += fmt::format("<text x=\"12\" y=\"{}\" transform=\"rotate(-90 12 {})\" text-anchor=\"middle\">% below</text>\n",
                     top + ph / 2, top + ph / 2);
  for (std::size_t s = 0; s < series.size(); ++s) {
    std::vector<double> v = series[s].second;
    std::sort(v.begin(), v.end());
    std::string pts;
    const int steps = 200;
    for (int k = 0; k <= steps; ++k) {
      const double xv = x_max * k / steps;
      const auto below = std::lower_bound(v.begin(), v.end(), xv) - v.begin();
      const double frac = v.empty() ? 0.0 : static_cast<double>(below) / static_cast<double>(v.size());
      pts += fmt::format("{:.1f},{:.1f} ", left + pw * k / steps, top + ph - ph * frac);
    }
    const char* color = kColors[s % 5];
    svg += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n", color, pts);
    svg += fmt::format("<text x=\"{}\" y=\"{}\" fill=\"{}\">{}</text>\n", left + pw - 120, top + 14 + 14 * s, color,
                       series[s].first);
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace poseforge
