#include "expertdg/harness/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace expertdg::harness {

namespace {

std::string seed_text(std::uint64_t s) { return std::to_string(s); }

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

CommandOutput toy_command(const ExperimentConfig& cfg) {
  ToyExperimentConfig tc = cfg.toy;
  tc.repeats = cfg.repeats_for("toy");
  const ToyResult res = run_toy_experiment(tc, cfg.seed, cfg.threads);
  CommandOutput out;
  out.tables.push_back(toy_table(res));

  Table reps{"toy_repeats", {"repeat", "seed", "h1", "R_B", "R_O"}, {}};
  for (const auto& r : res.repeats)
    for (std::size_t j = 0; j < tc.h1.size(); ++j)
      reps.rows.push_back({static_cast<long long>(r.repeat), seed_text(r.seed), tc.h1[j], r.R_B[j], r.R_O});
  std::stable_sort(reps.rows.begin(), reps.rows.end(), [](const auto& a, const auto& b) {
    return std::make_pair(std::get<long long>(a[2]), std::get<long long>(a[0])) <
           std::make_pair(std::get<long long>(b[2]), std::get<long long>(b[0]));
  });
  out.tables.push_back(std::move(reps));
  for (const auto& r : res.repeats) out.seeds.push_back(r.seed);
  out.notes = {{"repeats", std::to_string(tc.repeats)}, {"bayes_risk", fixed(tc.data.noise_sd * tc.data.noise_sd, 6)}};

  std::ostringstream s;
  s << "h1,R_B,R_O,E_B,E_O,R,r\n";
  for (const auto& row : out.tables.front().rows) {
    for (std::size_t j = 0; j < row.size(); ++j) s << (j ? "," : "") << format_cell(row[j]);
    s << '\n';
  }
  out.text = s.str();
  return out;
}

CommandOutput dg_command(const ExperimentConfig& cfg) {
  const Index seeds = cfg.repeats_for("dg");
  const DgResult res = run_dg_benchmark(cfg.dg, cfg.seed, seeds, cfg.threads);
  CommandOutput out;
  Table evals{"dg",
              {"target", "seed_index", "seed", "guidg_acc", "erm_acc", "best_solo_acc", "worst_expert_min_weight"},
              {}};
  for (const auto& e : res.evaluations)
    evals.rows.push_back({static_cast<long long>(e.target), static_cast<long long>(e.seed_index), seed_text(e.seed),
                          e.guidg_accuracy, e.erm_accuracy, e.best_solo(), static_cast<long long>(e.worst_gets_min_weight())});
  out.tables.push_back(std::move(evals));

  Table weights{"dg_weights",
                {"target", "expert", "source_domain", "mean_weight", "solo_acc", "ensemble_acc", "best_solo_acc"},
                {}};
  for (const auto& w : res.weights)
    for (std::size_t k = 0; k < w.sources.size(); ++k)
      weights.rows.push_back({static_cast<long long>(w.target), static_cast<long long>(k), static_cast<long long>(w.sources[k]),
                              w.mean_weights(static_cast<Index>(k)), w.solo_accuracy[k], w.ensemble_accuracy,
                              w.best_solo_accuracy});
  out.tables.push_back(std::move(weights));

  Table summary{"dg_summary", {"metric", "value"}, {}};
  summary.rows = {{std::string("mean_guidg_acc"), res.mean_guidg},
                  {std::string("mean_erm_acc"), res.mean_erm},
                  {std::string("mean_best_solo_acc"), res.mean_best_solo},
                  {std::string("worst_expert_min_weight_rate"), res.worst_min_weight_rate}};
  out.tables.push_back(std::move(summary));

  for (Index s = 0; s < seeds; ++s) out.seeds.push_back(derive_seed(cfg.seed, static_cast<std::uint64_t>(s)));
  out.notes = {{"seed_battery", std::to_string(seeds)},
               {"weight_sanity_threshold", "0.8"},
               {"protocol", "leave-one-out over every domain"}};
  out.text = "mean_guidg_acc=" + fixed(res.mean_guidg) + "\nmean_erm_acc=" + fixed(res.mean_erm) +
             "\nmean_best_solo_acc=" + fixed(res.mean_best_solo) +
             "\nworst_expert_min_weight_rate=" + fixed(res.worst_min_weight_rate) + "\n";
  return out;
}

CommandOutput ablate_command(const ExperimentConfig& cfg) {
  const Index seeds = cfg.repeats_for("ablate");
  const AblationResult res = run_ablation(cfg.dg, cfg.seed, seeds, cfg.threads);
  CommandOutput out;
  Table rows{"ablation", {"experts", "data", "target", "seed_index", "seed", "accuracy"}, {}};
  for (const auto& r : res.rows)
    rows.rows.push_back({to_string(r.experts), to_string(r.data), static_cast<long long>(r.target),
                         static_cast<long long>(r.seed_index), seed_text(r.seed), r.accuracy});
  out.tables.push_back(std::move(rows));
  Table cells{"ablation_summary", {"experts", "data", "mean_accuracy", "evaluations"}, {}};
  std::ostringstream s;
  for (const auto& c : res.cells) {
    cells.rows.push_back({to_string(c.experts), to_string(c.data), c.mean_accuracy, static_cast<long long>(c.evaluations)});
    s << to_string(c.experts) << '/' << to_string(c.data) << '=' << fixed(c.mean_accuracy) << '\n';
  }
  out.tables.push_back(std::move(cells));
  for (Index k = 0; k < seeds; ++k) out.seeds.push_back(derive_seed(cfg.seed, static_cast<std::uint64_t>(k)));
  out.notes = {{"seed_battery", std::to_string(seeds)}};
  out.text = s.str();
  return out;
}

CommandOutput bounds_command(const ExperimentConfig& cfg) {
  CommandOutput out;
  out.text = bounds::bounds_report(cfg.bounds);
  Table t{"bounds", {"key", "value"}, {}};
  std::istringstream in(out.text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    // Values keep the report's full precision, so they are stored as text.
    std::string value = line.substr(eq + 1);
    for (char& ch : value)
      if (ch == ',') ch = ';';
    t.rows.push_back({line.substr(0, eq), value});
  }
  out.tables.push_back(std::move(t));
  return out;
}

CommandOutput gradcheck_command(const ExperimentConfig& cfg) {
  const Index trials = cfg.repeats_for("gradcheck");
  const auto rows = run_gradcheck(cfg.gradcheck, cfg.seed, trials);
  CommandOutput out;
  Table t{"gradcheck", {"kind", "trial", "architecture", "activation", "loss", "params", "max_rel_error", "passed"}, {}};
  double worst = 0.0;
  Index failed = 0;
  for (const auto& r : rows) {
    t.rows.push_back({r.kind, static_cast<long long>(r.trial), r.architecture, r.activation, r.loss,
                      static_cast<long long>(r.params), r.max_rel_error, static_cast<long long>(r.passed)});
    worst = std::max(worst, r.max_rel_error);
    failed += r.passed ? 0 : 1;
  }
  out.tables.push_back(std::move(t));
  out.ok = failed == 0;
  out.notes = {{"mlp_trials", std::to_string(trials)}, {"tolerance", std::to_string(cfg.gradcheck.tolerance)}};
  char buf[128];
  std::snprintf(buf, sizeof buf, "checks=%zu\nfailed=%lld\nmax_rel_error=%.3e\n", rows.size(), static_cast<long long>(failed), worst);
  out.text = buf;
  return out;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"toy", "dg", "ablate", "bounds", "gradcheck"};
  return names;
}

Table toy_table(const ToyResult& result) {
  Table t{"toy", {"h1", "R_B", "R_O", "E_B", "E_O", "R", "r"}, {}};
  for (const auto& r : result.rows) t.rows.push_back({r.h1, r.R_B, r.R_O, r.E_B, r.E_O, r.R, r.r});
  return t;
}

CommandOutput run_command(const std::string& command, const ExperimentConfig& cfg) {
  if (cfg.repeats && *cfg.repeats < 1) throw std::invalid_argument("repeats must be >= 1");
  if (command == "toy") return toy_command(cfg);
  if (command == "dg") return dg_command(cfg);
  if (command == "ablate") return ablate_command(cfg);
  if (command == "bounds") return bounds_command(cfg);
  if (command == "gradcheck") return gradcheck_command(cfg);
  throw std::invalid_argument("unknown command '" + command + "'");
}

std::vector<std::filesystem::path> write_command_output(const std::string& command, const ExperimentConfig& cfg,
                                                        const CommandOutput& output, const std::string& started_utc,
                                                        double wall_clock_seconds) {
  Manifest m;
  m.command = command;
  m.config = config_entries(cfg);
  m.seeds = output.seeds;
  m.notes = output.notes;
  m.notes.emplace_back("threads", std::to_string(cfg.threads));
  m.started_utc = started_utc;
  m.wall_clock_seconds = wall_clock_seconds;
  return emit_report(output.tables, cfg.format, cfg.out, m);
}

}  // namespace expertdg::harness
