#include "cpgnn/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "cpgnn/binary_io.hpp"
#include "cpgnn/checkpoint.hpp"
#include "cpgnn/config.hpp"
#include "cpgnn/error.hpp"
#include "cpgnn/eval.hpp"
#include "cpgnn/grid.hpp"
#include "cpgnn/kg.hpp"
#include "cpgnn/proximity.hpp"
#include "cpgnn/trainer.hpp"

namespace cpgnn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "1.0.0";

// Config file plus per-key flag overrides shared by every subcommand.
struct ConfigArgs {
  std::string config_file;
  std::map<std::string, std::string> overrides;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_file, "flat key=value config file; flags override it");
    for (const auto& f : config_fields()) {
      const std::string key(f.key);
      options[key] = cmd->add_option("--" + key, overrides[key], std::string(f.help));
    }
  }

  RunConfig resolve(RunConfig base) const {
    if (!config_file.empty()) base = RunConfig::load(config_file);
    for (const auto& [key, opt] : options) {
      if (opt->count() > 0) base.set(key, overrides.at(key));
    }
    return base;
  }
};

json provenance(std::string_view command, const RunConfig& cfg) {
  return {{"tool", "cpgnn"},
          {"version", kToolVersion},
          {"command", command},
          {"config_digest", hex_digest(cfg.digest())},
          {"seed", cfg.train.seed},
          {"precision_bits", sizeof(Real) * 8},
          {"formats", {{"knowledge_graph", 1}, {"proximity_graph", 1}, {"checkpoint", 1}}}};
}

std::string provenance_comment(std::string_view command, const RunConfig& cfg) {
  return "# cpgnn " + std::string(kToolVersion) + " command=" + std::string(command) +
         " config_digest=" + hex_digest(cfg.digest()) + " seed=" + std::to_string(cfg.train.seed) + "\n";
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

fs::path default_kg_path(const RunConfig& cfg) {
  return cfg.kg_path.empty() ? fs::path(cfg.output_dir) / "kg.bin" : fs::path(cfg.kg_path);
}

KnowledgeGraph load_raw_graph(const RunConfig& cfg) {
  const fs::path kg_path = default_kg_path(cfg);
  if (fs::exists(kg_path)) return read_knowledge_graph(kg_path);
  if (!cfg.train_path.empty()) return ingest_dataset(cfg.train_path, cfg.valid_path, cfg.test_path).graph;
  throw DataError("no knowledge graph at " + kg_path.string() + " and no train_path to ingest");
}

KnowledgeGraph load_augmented(const RunConfig& cfg) {
  KnowledgeGraph kg = load_raw_graph(cfg);
  return kg.augmented() ? kg : augment_inverse(kg);
}

// Content address of a proximity graph: source graph plus (M, I).
std::uint64_t proximity_digest(std::uint64_t raw_kg_digest, const ProximityConfig& p) {
  Fnv1a h;
  h.update_value(raw_kg_digest);
  h.update_value(p.max_answer_set);
  h.update(format_real(p.threshold));
  return h.digest();
}

fs::path default_proximity_path(const RunConfig& cfg, std::uint64_t raw_kg_digest) {
  if (!cfg.proximity_path.empty()) return cfg.proximity_path;
  return fs::path(cfg.output_dir) / ("proximity-" + hex_digest(proximity_digest(raw_kg_digest, cfg.proximity)) + ".bin");
}

ProximityGraph load_proximity(const RunConfig& cfg, const KnowledgeGraph& raw, std::size_t num_entities) {
  const fs::path path = default_proximity_path(cfg, raw.digest());
  if (!fs::exists(path)) {
    throw DataError("proximity graph " + path.string() + " not found; run `cpgnn build-proximity` with the same " +
                    "max_answer_set and threshold");
  }
  ProximityGraph g = read_proximity_graph(path);
  if (g.max_answer_set() != cfg.proximity.max_answer_set || g.threshold() != cfg.proximity.threshold) {
    throw DataError("proximity graph " + path.string() + " was built with max_answer_set=" +
                    std::to_string(g.max_answer_set()) + " threshold=" + format_real(g.threshold()) +
                    ", run expects max_answer_set=" + std::to_string(cfg.proximity.max_answer_set) +
                    " threshold=" + format_real(cfg.proximity.threshold));
  }
  if (g.num_entities() != num_entities) {
    throw DataError("proximity graph covers " + std::to_string(g.num_entities()) + " entities, knowledge graph has " +
                    std::to_string(num_entities));
  }
  return g;
}

// Raw form of a graph that may already be augmented (only its digest is used).
KnowledgeGraph raw_of(const KnowledgeGraph& kg) {
  if (!kg.augmented()) return kg;
  Vocabulary rels;
  for (std::size_t r = 0; r < kg.raw_relation_count(); ++r) rels.intern(kg.relations().surface(static_cast<RelationId>(r)));
  return KnowledgeGraph(kg.entities(), rels, {kg.raw_train().begin(), kg.raw_train().end()}, kg.valid(), kg.test());
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "valid") return Split::kValid;
  if (s == "test") return Split::kTest;
  throw ConfigError("unknown split '" + s + "' (train|valid|test)");
}

int cmd_ingest(const RunConfig& cfg, const std::string& out_path, std::ostream& out) {
  if (cfg.train_path.empty()) throw ConfigError("ingest needs --train_path (and usually --valid_path, --test_path)");
  const auto t0 = std::chrono::steady_clock::now();
  IngestResult res = ingest_dataset(cfg.train_path, cfg.valid_path, cfg.test_path);
  const fs::path kg_path = out_path.empty() ? default_kg_path(cfg) : fs::path(out_path);
  if (kg_path.has_parent_path()) fs::create_directories(kg_path.parent_path());
  write_knowledge_graph(res.graph, kg_path);
  json report = res.report.to_json();
  report["provenance"] = provenance("ingest", cfg);
  report["kg_path"] = kg_path.string();
  report["kg_digest"] = hex_digest(res.graph.digest());
  report["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_text(kg_path.string() + ".report.json", report.dump(2) + "\n");
  out << report.dump(2) << "\n";
  return kExitOk;
}

int cmd_build_proximity(const RunConfig& cfg, bool tsv, std::ostream& out, std::ostream& err) {
  if (cfg.proximity.max_answer_set <= 2) throw ConfigError("max_answer_set must exceed 2");
  if (!(cfg.proximity.threshold >= 0)) throw ConfigError("threshold must be >= 0");
  const KnowledgeGraph kg = raw_of(load_raw_graph(cfg));
  const SPMMatrix spm = accumulate_spm(extract_qa_pairs(kg), cfg.proximity.max_answer_set);
  const ProximityGraph g = build_proximity_graph(spm, kg.num_entities(), cfg.proximity.threshold);
  const fs::path path = default_proximity_path(cfg, kg.digest());
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_proximity_graph(g, path);
  if (tsv) write_proximity_tsv(g, path.string() + ".tsv");
  json report = proximity_stats(g).to_json();
  double max_spm = 0.0;
  for (const auto& [k, v] : spm.entries()) max_spm = std::max(max_spm, v);
  report["max_spm"] = max_spm;
  report["provenance"] = provenance("build-proximity", cfg);
  report["max_answer_set"] = cfg.proximity.max_answer_set;
  report["threshold"] = cfg.proximity.threshold;
  report["proximity_path"] = path.string();
  if (g.edge_count() == 0) {
    err << "warning: proximity graph is empty (threshold " << format_real(cfg.proximity.threshold)
        << " is not below the largest SPM value " << format_real(max_spm) << ")\n";
  }
  write_text(path.string() + ".stats.json", report.dump(2) + "\n");
  out << report.dump(2) << "\n";
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, const std::string& resume, std::ostream& out) {
  cfg.validate();
  const KnowledgeGraph kg = load_augmented(cfg);
  std::optional<ProximityGraph> pgraph;
  if (!cfg.encoder.kg_only) pgraph = load_proximity(cfg, raw_of(kg), kg.num_entities());

  const fs::path run_dir = fs::path(cfg.output_dir) / ("run-" + hex_digest(cfg.digest()));
  fs::create_directories(run_dir);
  write_text(run_dir / "config.txt", provenance_comment("train", cfg) + cfg.to_text());
  json run = {{"provenance", provenance("train", cfg)}, {"kg_digest", hex_digest(kg.digest())}};
  write_text(run_dir / "run.json", run.dump(2) + "\n");

  Trainer trainer(kg, pgraph ? &*pgraph : nullptr, cfg);
  const fs::path log_path = run_dir / "metrics.jsonl";
  if (!resume.empty()) {
    trainer.restore(read_checkpoint(resume));
  } else {
    write_text(log_path, "");
  }
  std::ofstream log(log_path, std::ios::app);
  if (!log) throw DataError("cannot append to " + log_path.string());
  trainer.train([&](const EpochRecord& rec) {
    const std::string line = rec.to_json().dump();
    log << line << "\n" << std::flush;
    out << line << "\n" << std::flush;
    write_checkpoint(trainer.checkpoint(), run_dir / "checkpoint.bin");
  });
  write_checkpoint(trainer.checkpoint(), run_dir / "checkpoint.bin");
  write_checkpoint(trainer.best_checkpoint(), run_dir / "best.bin");
  json summary = {{"run_dir", run_dir.string()},
                  {"best_checkpoint", (run_dir / "best.bin").string()},
                  {"best_valid_mrr", trainer.state().best_epoch >= 0 ? json(trainer.state().best_valid_mrr) : json()},
                  {"best_epoch", trainer.state().best_epoch},
                  {"epochs", trainer.state().epoch}};
  out << summary.dump() << "\n";
  return kExitOk;
}

// Config saved in a checkpoint, with file locations taken from the command line.
RunConfig config_from_checkpoint(const Checkpoint& ckpt, const RunConfig& flags) {
  RunConfig cfg = RunConfig::from_text(ckpt.config_text);
  for (const auto& f : config_fields()) {
    if (f.is_path && !f.get(flags).empty()) f.set(cfg, f.get(flags));
  }
  cfg.eval_batch_size = flags.eval_batch_size;
  if (cfg.digest() != ckpt.config_digest) throw DataError("checkpoint config does not match its recorded digest");
  return cfg;
}

struct LoadedModel {
  RunConfig cfg;
  KnowledgeGraph kg;
  std::optional<ProximityGraph> pgraph;
  std::unique_ptr<Model> model;
};

LoadedModel load_model(const std::string& checkpoint, const RunConfig& flags) {
  const Checkpoint ckpt = read_checkpoint(checkpoint);
  LoadedModel m;
  m.cfg = config_from_checkpoint(ckpt, flags);
  m.kg = load_augmented(m.cfg);
  if (m.kg.digest() != ckpt.kg_digest) throw DataError("checkpoint was trained on a different knowledge graph");
  if (!m.cfg.encoder.kg_only) m.pgraph = load_proximity(m.cfg, raw_of(m.kg), m.kg.num_entities());
  m.model = std::make_unique<Model>(m.cfg.model_config(), m.kg.num_entities(), m.kg.num_relations(), m.cfg.train.seed);
  load_parameters(*m.model, ckpt.parameters);
  return m;
}

EvalResult run_evaluation(LoadedModel& m, Split split) {
  const RelationalAdjacency adj = RelationalAdjacency::build(m.kg);
  std::optional<ProximityAggregation> prox;
  if (m.pgraph) prox = ProximityAggregation::build(*m.pgraph);
  return evaluate(*m.model, m.kg, split, adj, prox ? &*prox : nullptr, m.cfg.eval_batch_size);
}

int cmd_evaluate(const RunConfig& flags, const std::string& checkpoint, const std::string& split_name,
                 const std::string& out_path, const std::string& ranks_path, std::ostream& out) {
  if (checkpoint.empty()) throw ConfigError("evaluate needs --checkpoint");
  const Split split = parse_split(split_name);
  LoadedModel m = load_model(checkpoint, flags);
  const EvalResult res = run_evaluation(m, split);
  json report = res.metrics.to_json(split_name);
  report["provenance"] = provenance("evaluate", m.cfg);
  report["checkpoint"] = checkpoint;
  report["kg_only"] = m.cfg.encoder.kg_only;
  json breakdown = json::array();
  for (const auto& r : ntype_mrr_breakdown(res.cases)) {
    breakdown.push_back({{"range", r.label}, {"count", r.count}, {"mrr", r.mrr}});
  }
  report["ntype_mrr"] = breakdown;
  if (!out_path.empty()) write_text(out_path, report.dump(2) + "\n");
  if (!ranks_path.empty()) {
    std::string tsv = provenance_comment("evaluate", m.cfg) + "anchor\trelation\ttarget\tdirection\tN\trank\n";
    for (const auto& c : res.cases) {
      tsv += m.kg.entities().surface(c.query.anchor) + "\t" + m.kg.relations().surface(c.query.relation) + "\t" +
             m.kg.entities().surface(c.target) + "\t" + (c.direction == QueryDirection::kTail ? "tail" : "head") +
             "\t" + std::to_string(c.train_answers) + "\t" + format_real(c.rank) + "\n";
    }
    write_text(ranks_path, tsv);
  }
  out << report.dump(2) << "\n";
  return kExitOk;
}

int cmd_ntype(const RunConfig& flags, const std::string& checkpoint, const std::string& split_name, bool as_json,
              std::ostream& out) {
  const Split split = parse_split(split_name);
  if (!checkpoint.empty()) {
    LoadedModel m = load_model(checkpoint, flags);
    const EvalResult res = run_evaluation(m, split);
    const auto table = ntype_table(res.cases);
    const auto breakdown = ntype_mrr_breakdown(res.cases);
    if (as_json) {
      json mrr = json::array();
      for (const auto& r : breakdown) mrr.push_back({{"range", r.label}, {"count", r.count}, {"mrr", r.mrr}});
      out << json{{"provenance", provenance("ntype", m.cfg)},
                  {"split", split_name},
                  {"ranges", ntype_json(table)},
                  {"mrr", mrr},
                  {"overall_mrr", res.metrics.mrr}}
                 .dump(2)
          << "\n";
    } else {
      out << provenance_comment("ntype", m.cfg) << ntype_tsv(table) << "\nrange\tcount\tmrr\n";
      for (const auto& r : breakdown) out << r.label << "\t" << r.count << "\t" << format_real(r.mrr) << "\n";
    }
    return kExitOk;
  }
  const KnowledgeGraph kg = load_raw_graph(flags);
  const auto table = ntype_report(kg, split);
  if (as_json) {
    out << json{{"provenance", provenance("ntype", flags)}, {"split", split_name}, {"ranges", ntype_json(table)}}.dump(2)
        << "\n";
  } else {
    out << provenance_comment("ntype", flags) << ntype_tsv(table);
  }
  return kExitOk;
}

int cmd_grid(const RunConfig& cfg, const std::string& grid_file, const GridBudget& budget, const std::string& out_path,
             std::ostream& out) {
  GridSpec spec = GridSpec::published();
  if (!grid_file.empty()) {
    std::ifstream in(grid_file);
    if (!in) throw ConfigError("cannot read grid file " + grid_file);
    std::stringstream ss;
    ss << in.rdbuf();
    spec = GridSpec::parse(ss.str());
  }
  const KnowledgeGraph kg = raw_of(load_raw_graph(cfg));
  const GridResult res = grid_search(kg, cfg, spec, budget);
  const std::string table = provenance_comment("grid", cfg) + trial_table_tsv(res, spec);
  const fs::path path = out_path.empty() ? fs::path(cfg.output_dir) / ("grid-" + hex_digest(cfg.digest()) + ".tsv")
                                         : fs::path(out_path);
  write_text(path, table);
  out << table;
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"CP-GNN knowledge graph embedding workbench"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  ConfigArgs ingest_args, prox_args, train_args, eval_args, ntype_args, grid_args;

  auto* ingest = app.add_subcommand("ingest", "read TSV splits, write the binary graph and an ingestion report");
  ingest_args.attach(ingest);
  std::string ingest_out;
  ingest->add_option("--out", ingest_out, "graph output path (default: kg_path or output_dir/kg.bin)");

  auto* prox = app.add_subcommand("build-proximity", "accumulate SPM and write the proximity graph with stats");
  prox_args.attach(prox);
  bool prox_tsv = false;
  prox->add_flag("--tsv", prox_tsv, "also write an i<TAB>j<TAB>weight export");

  auto* train = app.add_subcommand("train", "train a model; writes checkpoints and a JSON-lines metric log");
  train_args.attach(train);
  std::string resume;
  train->add_option("--resume", resume, "continue from a checkpoint written by this configuration");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "filtered ranking metrics for a checkpoint");
  eval_args.attach(evaluate_cmd);
  std::string eval_ckpt, eval_split = "test", eval_out, eval_ranks;
  evaluate_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  evaluate_cmd->add_option("--split", eval_split, "valid|test|train");
  evaluate_cmd->add_option("--out", eval_out, "also write the JSON report here");
  evaluate_cmd->add_option("--ranks", eval_ranks, "write per-case ranks as TSV");

  auto* ntype = app.add_subcommand("ntype", "N-type table of a split; per-range MRR when a checkpoint is given");
  ntype_args.attach(ntype);
  std::string ntype_ckpt, ntype_split = "test";
  bool ntype_json_out = false;
  ntype->add_option("--checkpoint", ntype_ckpt, "checkpoint for the per-range MRR breakdown");
  ntype->add_option("--split", ntype_split, "valid|test|train");
  ntype->add_flag("--json", ntype_json_out, "JSON instead of TSV");

  auto* grid = app.add_subcommand("grid", "grid search ranked by validation MRR");
  grid_args.attach(grid);
  std::string grid_file, grid_out;
  GridBudget budget;
  grid->add_option("--grid", grid_file, "lines of key=v1,v2,... (default: the published grid)");
  grid->add_option("--max-trials", budget.max_trials, "stop after this many trials (0 = all)");
  grid->add_option("--max-seconds", budget.max_seconds, "start no trial after this many seconds (0 = no limit)");
  grid->add_option("--jobs", budget.jobs, "trials run in parallel");
  grid->add_option("--out", grid_out, "trial table path (default: output_dir/grid-<digest>.tsv)");

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out, err);
      return code == 0 ? kExitOk : kExitConfig;
    }
    if (ingest->parsed()) return cmd_ingest(ingest_args.resolve({}), ingest_out, out);
    if (prox->parsed()) return cmd_build_proximity(prox_args.resolve({}), prox_tsv, out, err);
    if (train->parsed()) return cmd_train(train_args.resolve({}), resume, out);
    if (evaluate_cmd->parsed()) {
      return cmd_evaluate(eval_args.resolve({}), eval_ckpt, eval_split, eval_out, eval_ranks, out);
    }
    if (ntype->parsed()) return cmd_ntype(ntype_args.resolve({}), ntype_ckpt, ntype_split, ntype_json_out, out);
    if (grid->parsed()) return cmd_grid(grid_args.resolve({}), grid_file, budget, grid_out, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericDivergence& e) {
    err << "numeric divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace cpgnn
