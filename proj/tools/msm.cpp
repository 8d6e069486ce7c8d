// Command-line front end: hitprob, fit, rank, optimize, ber and throughput
// subcommands, all driven by a JSON config file (see README for the
// schema). Outputs are CSV files under --out.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "msm/config.hpp"

namespace {

struct CommonOptions {
  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;  // 0: keep the config's seed
  std::string engine;      // empty: keep the config's engine
};

msm::ExperimentConfig load(const CommonOptions& opt) {
  msm::ExperimentConfig cfg = msm::load_config(opt.config_path);
  if (opt.seed != 0) cfg.physics.seed = opt.seed;
  if (!opt.engine.empty()) cfg.ber.engine = msm::detail::parse_engine(opt.engine);
  return cfg;
}

std::string out_path(const CommonOptions& opt, const std::string& name) {
  std::filesystem::create_directories(opt.out_dir);
  return (std::filesystem::path(opt.out_dir) / name).string();
}

void add_common(CLI::App* cmd, CommonOptions& opt) {
  cmd->add_option("--config", opt.config_path, "JSON config file")->required();
  cmd->add_option("--out", opt.out_dir, "output directory");
  cmd->add_option("--seed", opt.seed, "override the config master seed");
  cmd->add_option("--engine", opt.engine, "override the channel engine (stats|particle)")
      ->check(CLI::IsMember({"stats", "particle"}));
}

int cmd_hitprob(const CommonOptions& opt) {
  const auto cfg = load(opt);
  const auto topo = cfg.topology();
  const int emitter = cfg.hitprob.emitter - 1;
  if (emitter < 0 || emitter >= topo.num_transmitters())
    throw msm::ConfigError("hitprob.emitter out of range");
  const auto est = msm::estimate_hit_probabilities(topo, cfg.physics, emitter,
                                                   cfg.hitprob.molecules, cfg.hitprob.slots);
  msm::CsvTable table;
  table.header = {"receiver", "slot", "p_hat", "stderr", "M", "seed"};
  for (int r = 0; r < topo.num_receivers(); ++r)
    for (int k = 0; k < cfg.hitprob.slots; ++k)
      table.rows.push_back({std::to_string(r + 1), std::to_string(k + 1),
                            msm::format_double(est.p_hat[r][k]),
                            msm::format_double(est.std_err[r][k]),
                            std::to_string(est.molecules), std::to_string(cfg.physics.seed)});
  const std::string path = out_path(opt, "hitprob.csv");
  msm::write_csv(path, table);
  std::cout << "wrote " << path << " (" << table.rows.size() << " rows, absorbed "
            << est.outcome.absorbed() << "/" << est.molecules << ")\n";
  return 0;
}

int cmd_fit(const CommonOptions& opt) {
  const auto cfg = load(opt);
  const auto topo = cfg.topology();
  const auto fits =
      msm::fit_scheme_coefficients(topo, cfg.physics, cfg.fit.molecules, cfg.fit.slots,
                                   cfg.fit.samples, cfg.fit.rmse_ceiling);
  const std::string path = out_path(opt, "coefficients.csv");
  msm::write_coefficients_csv(path, fits);
  std::cout << "wrote " << path << "\n";
  for (std::size_t c = 0; c < fits.size(); ++c)
    std::printf("  class %zu: b1=%.4f b2=%.4f b3=%.4f rmse=%.3e\n", c + 1,
                fits[c].coefficients.b1, fits[c].coefficients.b2, fits[c].coefficients.b3,
                fits[c].rmse);
  return 0;
}

int cmd_rank(const CommonOptions& opt) {
  const auto cfg = load(opt);
  if (cfg.rank.points.empty())
    throw msm::ConfigError("rank needs a non-empty rank.points list in the config");
  msm::CsvTable table;
  table.header = {"d", "h", "w", "Rr", "rank"};
  msm::Xoshiro256pp rng(msm::substream_seed(cfg.physics.seed, 0x52414E4Bull, 0));
  for (const auto& pt : cfg.rank.points) {
    const auto topo = msm::make_topology(cfg.scheme, pt.d1, pt.h, pt.w, pt.rr);
    const auto probs = msm::closed_form_slot_probabilities(topo, cfg.physics.slot_duration,
                                                           cfg.physics.diffusion);
    const std::vector<long> counts(topo.num_transmitters(), cfg.rank.molecules);
    // Modal rank across the sampled channel matrices.
    std::vector<int> histogram(topo.num_receivers() + 1, 0);
    for (int draw = 0; draw < cfg.rank.draws; ++draw) {
      const auto sample = msm::sample_channel_matrix(probs.slot1, counts, rng);
      histogram[msm::numerical_rank(sample.entries)]++;
    }
    int modal = 0;
    for (std::size_t r = 1; r < histogram.size(); ++r)
      if (histogram[r] >= histogram[modal]) modal = static_cast<int>(r);
    table.rows.push_back({msm::format_double(pt.d1), msm::format_double(pt.h),
                          msm::format_double(pt.w), msm::format_double(pt.rr),
                          std::to_string(modal)});
  }
  const std::string path = out_path(opt, "rank.csv");
  msm::write_csv(path, table);
  std::cout << "wrote " << path << " (" << table.rows.size() << " points)\n";
  return 0;
}

int cmd_optimize(const CommonOptions& opt, long l_total_override,
                 const std::string& targets_path) {
  auto cfg = load(opt);
  const auto topo = cfg.topology();
  const auto probs = msm::resolve_slot_probabilities(cfg, topo);
  const long l_total = l_total_override > 0 ? l_total_override
                                            : (cfg.ber.l_total.empty() ? 2000
                                                                       : cfg.ber.l_total[0]);
  const auto builder = msm::make_stats_builder(probs, cfg.scheme);
  msm::TargetVectors targets;
  if (!targets_path.empty()) {
    std::ifstream in(targets_path);
    if (!in) throw msm::ConfigError("cannot open targets file: " + targets_path);
    msm::json j;
    in >> j;
    targets.mean = j.at("mean").get<std::vector<double>>();
    targets.variance = j.at("variance").get<std::vector<double>>();
  } else {
    const auto naive = msm::MoleculeBudget::split(l_total);
    targets = msm::default_targets(builder(static_cast<double>(naive.bit0),
                                           static_cast<double>(naive.bit1)));
  }
  const auto budget = msm::optimize_molecule_budget(builder, l_total, targets);
  const auto exhaustive = msm::exhaustive_molecule_budget(builder, l_total, targets);
  const double objective = msm::budget_objective(
      builder(static_cast<double>(budget.bit0), static_cast<double>(budget.bit1)), targets);
  const double exhaustive_objective = msm::budget_objective(
      builder(static_cast<double>(exhaustive.bit0), static_cast<double>(exhaustive.bit1)),
      targets);
  std::printf("L0=%ld L1=%ld objective=%.6e\n", budget.bit0, budget.bit1, objective);
  std::printf("exhaustive: L0=%ld L1=%ld objective=%.6e delta=%ld molecules\n",
              exhaustive.bit0, exhaustive.bit1, exhaustive_objective,
              std::labs(exhaustive.bit0 - budget.bit0));
  return 0;
}

int cmd_ber(const CommonOptions& opt, bool dump_thresholds, bool with_baseline) {
  const auto cfg = load(opt);
  auto results = msm::run_ber(cfg);
  if (with_baseline || cfg.ber.baseline != msm::BaselineKind::kNone) {
    if (cfg.ber.baseline == msm::BaselineKind::kNone)
      throw msm::ConfigError("--baseline requested but the config names none");
    const auto baseline = msm::run_baseline(cfg);
    results.insert(results.end(), baseline.begin(), baseline.end());
  }
  const std::string csv = out_path(opt, "ber.csv");
  msm::export_results(results, csv, out_path(opt, "ber_summary.txt"));
  std::cout << "wrote " << csv << "\n";
  if (dump_thresholds) {
    const auto topo = cfg.topology();
    const auto probs = msm::resolve_slot_probabilities(cfg, topo);
    msm::CsvTable table;
    table.header = {"l_total", "index", "threshold"};
    for (long l_total : cfg.ber.l_total) {
      const auto budget = msm::resolve_budget(cfg, probs, l_total);
      const auto det =
          msm::make_msm_detector(topo, probs, budget, cfg.channel.variance_mode);
      for (std::size_t i = 0; i < det.thresholds.thresholds.size(); ++i)
        table.rows.push_back({std::to_string(l_total), std::to_string(i + 1),
                              msm::format_double(det.thresholds.thresholds[i])});
    }
    const std::string tpath = out_path(opt, "thresholds.csv");
    msm::write_csv(tpath, table);
    std::cout << "wrote " << tpath << "\n";
  }
  return 0;
}

int cmd_throughput(const CommonOptions& opt) {
  const auto cfg = load(opt);
  std::ifstream in(opt.config_path);
  msm::json j;
  in >> j;
  std::vector<std::string> schemes{"siso", "2x1", "2x2", "4x4"};
  std::map<std::string, std::string> coefficient_files;
  if (j.contains("throughput")) {
    const auto& t = j.at("throughput");
    if (t.contains("schemes")) schemes = t.at("schemes").get<std::vector<std::string>>();
    if (t.contains("coefficients"))
      coefficient_files =
          t.at("coefficients").get<std::map<std::string, std::string>>();
  }
  std::vector<msm::BerResult> results;
  for (const auto& name : schemes) {
    msm::ExperimentConfig scheme_cfg = cfg;
    scheme_cfg.scheme = msm::parse_scheme(name);
    if (auto it = coefficient_files.find(name); it != coefficient_files.end()) {
      scheme_cfg.channel.source = msm::ChannelSource::kFitted;
      scheme_cfg.channel.coefficients_csv = it->second;
    } else {
      scheme_cfg.channel.source = msm::ChannelSource::kClosedForm;
    }
    const auto series = msm::run_ber(scheme_cfg);
    results.insert(results.end(), series.begin(), series.end());
  }
  const std::string csv = out_path(opt, "throughput.csv");
  msm::export_results(results, csv, out_path(opt, "throughput_summary.txt"));
  std::cout << "wrote " << csv << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Molecular spatial modulation link simulator"};
  app.require_subcommand(1);

  CommonOptions opt;
  long l_total = 0;
  std::string targets_path;
  bool dump_thresholds = false;
  bool with_baseline = false;

  auto* hitprob = app.add_subcommand("hitprob", "empirical per-slot hit probabilities");
  add_common(hitprob, opt);
  auto* fit = app.add_subcommand("fit", "fit control coefficients per distance class");
  add_common(fit, opt);
  auto* rank = app.add_subcommand("rank", "sampled channel matrix rank over a geometry sweep");
  add_common(rank, opt);
  auto* optimize = app.add_subcommand("optimize", "molecule budget optimization");
  add_common(optimize, opt);
  optimize->add_option("--l-total", l_total, "override the total molecule budget");
  optimize->add_option("--targets", targets_path, "JSON file with target vectors b and c");
  auto* ber = app.add_subcommand("ber", "Monte Carlo BER sweep");
  add_common(ber, opt);
  ber->add_flag("--dump-thresholds", dump_thresholds, "also write the decision thresholds");
  ber->add_flag("--baseline", with_baseline, "also run the configured baseline");
  auto* thr = app.add_subcommand("throughput", "throughput comparison across schemes");
  add_common(thr, opt);

  CLI11_PARSE(app, argc, argv);

  try {
    if (hitprob->parsed()) return cmd_hitprob(opt);
    if (fit->parsed()) return cmd_fit(opt);
    if (rank->parsed()) return cmd_rank(opt);
    if (optimize->parsed()) return cmd_optimize(opt, l_total, targets_path);
    if (ber->parsed()) return cmd_ber(opt, dump_thresholds, with_baseline);
    if (thr->parsed()) return cmd_throughput(opt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
