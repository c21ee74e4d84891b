#include "cli/commands.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"

#include "bias/bias.hpp"
#include "cli/config.hpp"
#include "cli/svgplot.hpp"
#include "corpus/corpus.hpp"
#include "diffcore/errors.hpp"
#include "diffcore/rng.hpp"
#include "embedder/embedder.hpp"
#include "matchnet/matchnet.hpp"
#include "oneshot/oneshot.hpp"
#include "stats/stats.hpp"
#include "stimgen/stimgen.hpp"

namespace cli {
namespace {

namespace fs = std::filesystem;
using diffcore::ContractError;

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ContractError("cannot open '" + path.string() + "' for writing");
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
  f.flush();
  if (!f) throw ContractError("write failed for '" + path.string() + "'");
}

RunConfig config_for(const std::string& config_path) {
  return config_path.empty() ? RunConfig{} : load_config(config_path);
}

// Explicit --out wins; otherwise the artifact lands under the config's
// output directory.
std::string resolve_out(const RunConfig& cfg, const std::string& explicit_out,
                        const std::string& default_name) {
  if (!explicit_out.empty()) return explicit_out;
  return (fs::path(cfg.out_dir) / default_name).string();
}

void ensure_parent_dir(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

stimgen::LabeledDataset build_world(const RunConfig& cfg) {
  return stimgen::generate_dataset(cfg.world_mode, cfg.world_classes, cfg.world_per_class,
                                   cfg.world_seed, cfg.image_size);
}

std::vector<bias::ProbeDataset> probe_datasets(const RunConfig& cfg) {
  std::vector<bias::ProbeDataset> out;
  if (cfg.probe_source == "synthetic") {
    for (int i = 0; i < cfg.probe_datasets; ++i)
      out.push_back({"probe" + std::to_string(i),
                     stimgen::make_probe_triples(cfg.probe_triples,
                                                 cfg.probe_seed + static_cast<std::uint64_t>(i),
                                                 cfg.image_size)});
  } else {
    out.push_back(
        {fs::path(cfg.probe_source).stem().string(), corpus::load_manifest(cfg.probe_source)});
  }
  return out;
}

oneshot::DistanceKind parse_distance(const std::string& name) {
  if (name == "euclidean") return oneshot::DistanceKind::EUCLIDEAN;
  if (name == "cosine") return oneshot::DistanceKind::COSINE_DISTANCE;
  throw ContractError("unknown distance '" + name + "' (euclidean | cosine)");
}

// ---------------------------------------------------------------------------
// gen-stimuli
// ---------------------------------------------------------------------------

int cmd_gen_stimuli(const RunConfig& cfg, const std::string& out_dir, std::ostream& out,
                    std::ostream& err) {
  const fs::path dir(out_dir);
  fs::create_directories(dir / "triples");
  fs::create_directories(dir / "world");

  if (cfg.probe_triples % stimgen::kNumBackgrounds != 0)
    err << "warning: " << cfg.probe_triples << " triples is not a multiple of "
        << stimgen::kNumBackgrounds
        << " backgrounds; the backdrop balance across triples is broken\n";

  const auto triples =
      stimgen::make_probe_triples(cfg.probe_triples, cfg.probe_seed, cfg.image_size);
  corpus::save_manifest((dir / "triples" / "manifest.csv").string(), triples);

  const auto world = build_world(cfg);
  std::string labels = "path,label,heldout\n";
  for (std::size_t i = 0; i < world.items.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "img_%05zu.ppm", i);
    corpus::ppm_save((dir / "world" / name).string(), world.items[i].stim);
    labels += std::string(name) + "," + std::to_string(world.items[i].label) + "," +
              (world.items[i].heldout ? "1" : "0") + "\n";
  }
  write_text_file(dir / "world" / "labels.csv", labels);

  out << "triples\t" << triples.size() << "\n";
  out << "world_images\t" << world.items.size() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train-embedder
// ---------------------------------------------------------------------------

int cmd_train_embedder(const RunConfig& cfg, std::optional<std::uint64_t> seed_override,
                       const std::string& out_path, std::ostream& out) {
  auto ecfg = cfg.embedder;
  if (seed_override) ecfg.seed = *seed_override;
  const auto world = build_world(cfg);
  const auto checkpoints = embedder::train_embedder(world, ecfg);

  out << "step\tloss\taccuracy\n";
  for (const auto& ckpt : checkpoints)
    out << ckpt.step << "\t" << format_double(ckpt.train_loss) << "\t"
        << format_double(ckpt.train_accuracy) << "\n";

  ensure_parent_dir(out_path);
  embedder::save_checkpoint(out_path, checkpoints.back());
  return 0;
}

// ---------------------------------------------------------------------------
// train-mn
// ---------------------------------------------------------------------------

// Mean per-probe loss and one-shot accuracy over fixed evaluation episodes
// drawn from classes the classifier never trained on.
std::pair<double, double> eval_matchnet(const matchnet::MatchNetModel& model,
                                        const std::vector<std::vector<double>>& feats,
                                        const std::vector<matchnet::Episode>& episodes) {
  double loss_sum = 0.0;
  long correct = 0, total = 0;
  for (const auto& ep : episodes) {
    std::vector<std::vector<double>> sup, probes;
    for (int idx : ep.support_items) sup.push_back(feats[static_cast<std::size_t>(idx)]);
    for (int idx : ep.probe_items) probes.push_back(feats[static_cast<std::size_t>(idx)]);
    loss_sum += matchnet::episode_forward_backward_features(model, sup, probes, ep.permutation).loss;
    const int way = static_cast<int>(sup.size());
    for (int b = 0; b < way; ++b) {
      const auto dist = matchnet::mn_predict_features(model, probes[static_cast<std::size_t>(b)],
                                                      sup, ep.permutation, way);
      correct += oneshot::one_shot_label(dist) == ep.permutation[static_cast<std::size_t>(b)];
      ++total;
    }
  }
  return {loss_sum / static_cast<double>(total), static_cast<double>(correct) / total};
}

int cmd_train_mn(const RunConfig& cfg, std::optional<std::uint64_t> seed_override,
                 const std::string& embedder_path, const std::string& out_path, std::ostream& out,
                 std::ostream& err) {
  if (!fs::exists(embedder_path)) {
    err << "error: embedder checkpoint '" << embedder_path << "' does not exist\n";
    return 2;
  }
  auto mcfg = cfg.mn;
  if (seed_override) mcfg.seed = *seed_override;

  const int train_classes = cfg.world_classes - cfg.sweep_holdout_classes;
  if (train_classes < mcfg.way)
    throw ContractError("train-mn: the world leaves fewer training classes than the episode way");
  if (cfg.sweep_holdout_classes < mcfg.way)
    throw ContractError("train-mn: " + std::to_string(cfg.sweep_holdout_classes) +
                        " held-out classes cannot host a " + std::to_string(mcfg.way) +
                        "-way evaluation episode");

  auto base = std::make_shared<const embedder::EmbedderCheckpoint>(
      embedder::load_checkpoint(embedder_path));
  if (base->image_size != cfg.image_size)
    throw ContractError("train-mn: checkpoint expects " + std::to_string(base->image_size) +
                        "px images but the configured world renders at " +
                        std::to_string(cfg.image_size) + "px");
  const auto world = build_world(cfg);
  const auto train_ds = stimgen::class_subset(world, 0, train_classes);
  const auto eval_ds = stimgen::class_subset(world, train_classes, cfg.sweep_holdout_classes);

  const auto training = matchnet::train_matchnet(base, train_ds, mcfg);

  const auto eval_feats = matchnet::base_features(*base, eval_ds);
  diffcore::Rng root(mcfg.seed);
  auto erng = root.fork("mn_eval");
  std::vector<matchnet::Episode> eval_episodes;
  eval_episodes.reserve(static_cast<std::size_t>(cfg.sweep_eval_episodes));
  for (int i = 0; i < cfg.sweep_eval_episodes; ++i)
    eval_episodes.push_back(matchnet::sample_episode(eval_ds, mcfg.way, erng));

  out << "step\tloss\taccuracy\n";
  for (const auto& model : training.checkpoints) {
    const auto [loss, accuracy] = eval_matchnet(model, eval_feats, eval_episodes);
    out << model.episodes_trained << "\t" << format_double(loss) << "\t"
        << format_double(accuracy) << "\n";
  }

  ensure_parent_dir(out_path);
  matchnet::save_matchnet(out_path, training.checkpoints.back(), embedder_path);
  return 0;
}

// ---------------------------------------------------------------------------
// probe
// ---------------------------------------------------------------------------

int cmd_probe(const std::string& embedder_path, const std::string& mn_path,
              const std::string& manifest_path, const std::string& distance_name,
              std::ostream& out) {
  const auto triples = corpus::load_manifest(manifest_path);
  std::vector<bias::ProbeOutcome> outcomes;
  if (!mn_path.empty()) {
    const auto model = matchnet::load_matchnet(mn_path);
    outcomes = bias::probe_all(bias::mn_scorer(model), triples);
  } else {
    const auto ckpt = embedder::load_checkpoint(embedder_path);
    outcomes = bias::probe_all(bias::ib_scorer(ckpt, parse_distance(distance_name)), triples);
  }
  long ties = 0;
  for (const auto& o : outcomes) ties += o.margin == 0.0;
  out << "triples\t" << outcomes.size() << "\n";
  out << "ties\t" << ties << "\n";
  out << "bias\t" << format_double(bias::measure_bias(outcomes)) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

int cmd_sweep(const RunConfig& cfg, std::optional<int> jobs_override, const std::string& out_path,
              std::ostream& out) {
  bias::SweepConfig sc;
  sc.n_embedder_seeds = cfg.sweep_embedder_seeds;
  sc.mn_seeds_per_embedder = cfg.sweep_mn_seeds;
  sc.embedder = cfg.embedder;
  sc.mn = cfg.mn;
  sc.world_mode = cfg.world_mode;
  sc.world_classes = cfg.world_classes;
  sc.world_per_class = cfg.world_per_class;
  sc.world_seed = cfg.world_seed;
  sc.mn_holdout_classes = cfg.sweep_holdout_classes;
  sc.mn_eval_episodes = cfg.sweep_eval_episodes;
  sc.probe_datasets = probe_datasets(cfg);
  sc.distance = cfg.sweep_distance;
  sc.jobs = jobs_override.value_or(cfg.sweep_jobs);

  ensure_parent_dir(out_path);
  const auto records = bias::run_sweep(sc, out_path);
  out << "records\t" << records.size() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// stats
// ---------------------------------------------------------------------------

// End-of-training values: the highest-step record per (seed, dataset).
struct Finals {
  std::vector<double> bias;
  std::vector<double> accuracy;
};

Finals finals_for(const std::vector<corpus::BiasRecord>& records, corpus::ModelKind kind) {
  std::map<std::pair<long, std::string>, const corpus::BiasRecord*> last;
  for (const auto& r : records) {
    if (r.model_kind != kind) continue;
    auto& slot = last[{r.seed, r.dataset}];
    if (slot == nullptr || r.step > slot->step) slot = &r;
  }
  Finals out;
  for (const auto& [key, r] : last) {
    out.bias.push_back(r->bias);
    out.accuracy.push_back(r->accuracy);
  }
  return out;
}

int cmd_stats(const std::string& records_path, std::ostream& out) {
  const auto records = corpus::records_read(records_path);
  const Finals ib = finals_for(records, corpus::ModelKind::IB);
  const Finals mn = finals_for(records, corpus::ModelKind::MN);

  const auto print_kind = [&](const char* name, const Finals& finals) {
    if (finals.bias.empty()) return;
    if (finals.bias.size() >= 2) {
      const auto [mean, sd] = stats::mean_std(finals.bias);
      out << name << "_final_bias_mean\t" << format_double(mean) << "\n";
      out << name << "_final_bias_std\t" << format_double(sd) << "\n";
    } else {
      out << name << "_final_bias_mean\t" << format_double(finals.bias.front()) << "\n";
    }
  };
  print_kind("ib", ib);
  print_kind("mn", mn);

  // Bias against accuracy across the population: the matching classifiers
  // when present (the larger population), the embedder baseline otherwise.
  const Finals& population = mn.bias.empty() ? ib : mn;
  if (population.bias.size() >= 3) {
    try {
      const double rho = stats::pearson(population.bias, population.accuracy);
      const auto ct = stats::corr_t_test(rho, static_cast<int>(population.bias.size()));
      out << "correlation\trho=" << format_double(ct.rho) << "\tt=" << format_double(ct.t)
          << "\tdf=" << ct.df << "\tp_one_tail=" << format_double(ct.p_one_tail) << "\n";
    } catch (const ContractError& e) {  // degenerate sample, e.g. zero variance
      out << "correlation\tskipped: " << e.what() << "\n";
    }
  }

  if (!ib.bias.empty() && !mn.bias.empty()) {
    const auto pairs = bias::pair_mn_ib(records);
    if (pairs.size() >= 2) {
      std::vector<double> mn_vals, ib_vals;
      for (const auto& [ib_b, mn_b] : pairs) {
        ib_vals.push_back(ib_b);
        mn_vals.push_back(mn_b);
      }
      try {
        const auto pt = stats::paired_t_test(mn_vals, ib_vals);
        out << "paired_mn_vs_ib\tt=" << format_double(pt.t) << "\tdf=" << pt.df
            << "\tp_two_tail=" << format_double(pt.p_two_tail) << "\n";
      } catch (const diffcore::NumericError& e) {  // constant nonzero difference
        out << "paired_mn_vs_ib\tskipped: " << e.what() << "\n";
      }
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

std::string seed_label(long seed) { return "seed " + std::to_string(seed); }

int cmd_report(const std::string& records_path, const std::string& out_dir, double bandwidth,
               std::ostream& out) {
  const auto records = corpus::records_read(records_path);
  std::vector<const corpus::BiasRecord*> ib_records;
  for (const auto& r : records)
    if (r.model_kind == corpus::ModelKind::IB) ib_records.push_back(&r);
  if (ib_records.empty())
    throw ContractError("report: the records hold no nearest-neighbour baseline rows");
  // Resolve the scatter pairs up front so a malformed population fails
  // before any file is written.
  const auto pairs = bias::pair_mn_ib(records);

  const fs::path dir(out_dir);
  fs::create_directories(dir);
  std::vector<std::string> written;
  const auto emit = [&](const std::string& name, const std::string& content) {
    write_text_file(dir / name, content);
    written.push_back((dir / name).string());
  };

  const bool many_datasets = [&] {
    std::set<std::string> names;
    for (const auto* r : ib_records) names.insert(r->dataset);
    return names.size() > 1;
  }();

  // --- Bias across training, one line per embedder seed (and dataset). ---
  std::map<std::pair<long, std::string>, svgplot::Series> bias_curves;
  std::map<std::pair<long, long>, double> accuracy_by_seed_step;
  for (const auto* r : ib_records) {
    auto& series = bias_curves[{r->seed, r->dataset}];
    if (series.x.empty())
      series.label = many_datasets ? seed_label(r->seed) + " / " + r->dataset
                                   : seed_label(r->seed);
    series.x.push_back(static_cast<double>(r->step));
    series.y.push_back(r->bias);
    accuracy_by_seed_step[{r->seed, r->step}] = r->accuracy;
  }

  {
    std::string csv = "seed,dataset,step,bias\n";
    std::vector<svgplot::Series> series;
    for (auto& [key, s] : bias_curves) {
      std::vector<std::size_t> order(s.x.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::sort(order.begin(), order.end(),
                [&](std::size_t a, std::size_t b) { return s.x[a] < s.x[b]; });
      svgplot::Series sorted{s.label, {}, {}};
      for (std::size_t i : order) {
        sorted.x.push_back(s.x[i]);
        sorted.y.push_back(s.y[i]);
        csv += std::to_string(key.first) + "," + key.second + "," +
               std::to_string(static_cast<long>(s.x[i])) + "," + format_double(s.y[i]) + "\n";
      }
      series.push_back(std::move(sorted));
    }
    svgplot::ChartSpec spec;
    spec.title = "Shape bias across embedder training";
    spec.x_label = "training step";
    spec.y_label = "shape bias";
    spec.y_range = {{0.0, 1.0}};
    emit("bias_vs_step.csv", csv);
    emit("bias_vs_step.svg", svgplot::line_chart(spec, series));
  }

  {
    std::string csv = "seed,step,accuracy\n";
    std::map<long, svgplot::Series> curves;
    for (const auto& [key, accuracy] : accuracy_by_seed_step) {
      auto& s = curves[key.first];
      if (s.x.empty()) s.label = seed_label(key.first);
      s.x.push_back(static_cast<double>(key.second));
      s.y.push_back(accuracy);
      csv += std::to_string(key.first) + "," + std::to_string(key.second) + "," +
             format_double(accuracy) + "\n";
    }
    std::vector<svgplot::Series> series;
    for (auto& [seed, s] : curves) series.push_back(std::move(s));
    svgplot::ChartSpec spec;
    spec.title = "Held-out classification accuracy across training";
    spec.x_label = "training step";
    spec.y_label = "accuracy";
    spec.y_range = {{0.0, 1.0}};
    emit("accuracy_vs_step.csv", csv);
    emit("accuracy_vs_step.svg", svgplot::line_chart(spec, series));
  }

  // --- Bias densities at the start, middle and end of training. ---
  {
    std::vector<long> steps;
    for (const auto* r : ib_records) steps.push_back(r->step);
    std::sort(steps.begin(), steps.end());
    steps.erase(std::unique(steps.begin(), steps.end()), steps.end());
    const std::size_t n = steps.size();
    const std::size_t w = std::max<std::size_t>(1, n / 10);
    const auto window_values = [&](std::size_t first) {
      std::set<long> wanted(steps.begin() + static_cast<std::ptrdiff_t>(first),
                            steps.begin() + static_cast<std::ptrdiff_t>(first + w));
      std::vector<double> values;
      for (const auto* r : ib_records)
        if (wanted.count(r->step)) values.push_back(r->bias);
      return values;
    };
    const std::vector<std::pair<std::string, std::vector<double>>> windows = {
        {"start", window_values(0)},
        {"middle", window_values((n - w) / 2)},
        {"end", window_values(n - w)},
    };

    std::vector<double> grid;
    for (int i = 0; i <= 240; ++i) grid.push_back(-0.2 + 1.4 * i / 240.0);
    const std::optional<double> bw =
        bandwidth > 0.0 ? std::optional<double>(bandwidth) : std::nullopt;

    std::string csv = "window,x,density\n";
    std::vector<svgplot::Series> series;
    for (const auto& [name, values] : windows) {
      const auto density = stats::kde(values, grid, bw);
      svgplot::Series s{name, grid, density.density};
      for (std::size_t i = 0; i < grid.size(); ++i)
        csv += name + "," + format_double(grid[i]) + "," + format_double(density.density[i]) +
               "\n";
      series.push_back(std::move(s));
    }
    svgplot::ChartSpec spec;
    spec.title = "Shape-bias density at start, middle and end of training";
    spec.x_label = "shape bias";
    spec.y_label = "density";
    emit("bias_kde.csv", csv);
    emit("bias_kde.svg", svgplot::line_chart(spec, series));
  }

  // --- Matching classifier against its own embedder baseline. ---
  {
    std::string csv = "ib_bias,mn_bias\n";
    svgplot::Series points;
    for (const auto& [ib_b, mn_b] : pairs) {
      points.x.push_back(ib_b);
      points.y.push_back(mn_b);
      csv += format_double(ib_b) + "," + format_double(mn_b) + "\n";
    }
    svgplot::ChartSpec spec;
    spec.title = "Matching-classifier bias against embedder bias";
    spec.x_label = "embedder shape bias";
    spec.y_label = "matching-classifier shape bias";
    spec.identity_line = true;
    spec.x_range = {{0.0, 1.0}};
    spec.y_range = {{0.0, 1.0}};
    emit("mn_vs_ib.csv", csv);
    emit("mn_vs_ib.svg", svgplot::scatter_chart(spec, {points}));
  }

  for (const auto& path : written) out << "wrote\t" << path << "\n";
  return 0;
}

}  // namespace

// ---------------------------------------------------------------------------
// Argument parsing and dispatch
// ---------------------------------------------------------------------------

std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw ContractError("format_double: value not representable");
  return std::string(buf, ptr);
}

int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Shape-bias laboratory for one-shot image classifiers"};
  app.require_subcommand(1);

  std::string config_path, out_path, embedder_path, mn_path, manifest_path, records_path;
  std::string distance_name = "euclidean";
  std::uint64_t seed = 0;
  int jobs = 0;
  double bandwidth = 0.0;

  auto* gen = app.add_subcommand("gen-stimuli", "Render probe triples and a labeled world");
  gen->add_option("--config", config_path, "Run configuration file")->check(CLI::ExistingFile);
  gen->add_option("--out", out_path, "Output directory (default: config output dir)");

  auto* tre = app.add_subcommand("train-embedder", "Train an embedding classifier");
  tre->add_option("--config", config_path, "Run configuration file")->check(CLI::ExistingFile);
  tre->add_option("--out", out_path, "Checkpoint file to write");
  auto* tre_seed = tre->add_option("--seed", seed, "Override the training seed");

  auto* trm = app.add_subcommand("train-mn", "Train a matching classifier on a frozen embedder");
  trm->add_option("--config", config_path, "Run configuration file")->check(CLI::ExistingFile);
  trm->add_option("--embedder", embedder_path, "Embedder checkpoint to build on")->required();
  trm->add_option("--out", out_path, "Model file to write");
  auto* trm_seed = trm->add_option("--seed", seed, "Override the training seed");

  auto* prb = app.add_subcommand("probe", "Measure shape bias on a triple manifest");
  auto* prb_e = prb->add_option("--embedder", embedder_path, "Embedder checkpoint to probe")
                    ->check(CLI::ExistingFile);
  auto* prb_m = prb->add_option("--mn", mn_path, "Matching-classifier model to probe")
                    ->check(CLI::ExistingFile);
  prb_e->excludes(prb_m);
  prb->add_option("--manifest", manifest_path, "Probe-triple manifest")
      ->required()
      ->check(CLI::ExistingFile);
  prb->add_option("--distance", distance_name, "Distance for the nearest-neighbour rule")
      ->check(CLI::IsMember({"euclidean", "cosine"}));

  auto* swp = app.add_subcommand("sweep", "Run the population experiment");
  swp->add_option("--config", config_path, "Run configuration file")->check(CLI::ExistingFile);
  swp->add_option("--out", out_path, "Records CSV to write");
  auto* swp_jobs = swp->add_option("--jobs", jobs, "Concurrent seed jobs")
                       ->check(CLI::PositiveNumber);

  auto* sts = app.add_subcommand("stats", "Population statistics over sweep records");
  sts->add_option("--records", records_path, "Records CSV")->required()->check(CLI::ExistingFile);

  auto* rpt = app.add_subcommand("report", "Plots and tables from sweep records");
  rpt->add_option("--records", records_path, "Records CSV")->required()->check(CLI::ExistingFile);
  rpt->add_option("--out", out_path, "Output directory")->required();
  rpt->add_option("--bandwidth", bandwidth, "Density bandwidth (default: data-driven)")
      ->check(CLI::PositiveNumber);

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      const auto cfg = config_for(config_path);
      return cmd_gen_stimuli(cfg, resolve_out(cfg, out_path, "stimuli"), out, err);
    }
    if (tre->parsed()) {
      const auto cfg = config_for(config_path);
      const auto seed_override =
          tre_seed->count() ? std::optional<std::uint64_t>(seed) : std::nullopt;
      return cmd_train_embedder(cfg, seed_override, resolve_out(cfg, out_path, "embedder.ckpt"),
                                out);
    }
    if (trm->parsed()) {
      const auto cfg = config_for(config_path);
      const auto seed_override =
          trm_seed->count() ? std::optional<std::uint64_t>(seed) : std::nullopt;
      return cmd_train_mn(cfg, seed_override, embedder_path,
                          resolve_out(cfg, out_path, "matchnet.ckpt"), out, err);
    }
    if (prb->parsed()) {
      if (embedder_path.empty() && mn_path.empty()) {
        err << "error: probe needs --embedder or --mn\n";
        return 2;
      }
      return cmd_probe(embedder_path, mn_path, manifest_path, distance_name, out);
    }
    if (swp->parsed()) {
      const auto cfg = config_for(config_path);
      const auto jobs_override = swp_jobs->count() ? std::optional<int>(jobs) : std::nullopt;
      return cmd_sweep(cfg, jobs_override, resolve_out(cfg, out_path, "records.csv"), out);
    }
    if (sts->parsed()) return cmd_stats(records_path, out);
    if (rpt->parsed()) return cmd_report(records_path, out_path, bandwidth, out);
    err << "error: no command selected\n";
    return 2;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const corpus::DecodeError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const diffcore::NumericError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const diffcore::TrainingError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace cli
