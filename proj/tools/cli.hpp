#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ovc/attention_log.hpp"
#include "ovc/checkpoint.hpp"
#include "ovc/dataio.hpp"
#include "ovc/interpret.hpp"
#include "ovc/metrics.hpp"
#include "ovc/model.hpp"
#include "ovc/synthetic.hpp"
#include "ovc/trainer.hpp"

namespace ovc::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Thrown for argument combinations CLI11 cannot check on its own.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Eval-mode predictions split over up to `threads` workers; each worker
/// builds its own tapes over the shared, read-only model.
inline std::vector<model::Prediction> predict_parallel(const model::Model& m,
                                                       const std::vector<const data::ImageRecord*>& recs,
                                                       unsigned threads) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(recs.size())));
  if (threads <= 1) return model::predict(m, recs);
  std::vector<std::vector<model::Prediction>> parts(threads);
  std::vector<std::thread> pool;
  const std::size_t per = (recs.size() + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    const std::size_t lo = std::min(recs.size(), t * per), hi = std::min(recs.size(), lo + per);
    pool.emplace_back([&, t, lo, hi] {
      parts[t] = model::predict(m, std::span<const data::ImageRecord* const>(recs).subspan(lo, hi - lo));
    });
  }
  for (auto& th : pool) th.join();
  std::vector<model::Prediction> out;
  for (auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

inline std::vector<const data::ImageRecord*> select(const data::Dataset& ds, const std::string& split) {
  if (split == "all") {
    std::vector<const data::ImageRecord*> v;
    for (const auto& r : ds.records) v.push_back(&r);
    return v;
  }
  return train::records_in(ds, parse_split(split));
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

struct RelationFlags {
  bool no_visual = false, no_semantic = false, no_spatial = false;
  model::RelationToggles toggles() const { return {!no_visual, !no_semantic, !no_spatial}; }
};

/// Parses and executes one command line. Output files are the product;
/// `out` receives reports when no output path is given, `err` diagnostics.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Object-level visual component aesthetics model: data, training, evaluation, interpretation", "ovc"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "ovc 1.0");

  // synth
  struct {
    std::uint64_t seed = 0;
    std::size_t n = 0;
    std::string profile = "desk";
    fs::path out;
    double test_fraction = 0.2;
    bool no_wide = false;
    std::string plant_label;
    double plant_corr = 0.0;
  } sy;
  auto* synth = app.add_subcommand("synth", "Generate a seeded synthetic dataset directory");
  synth->add_option("--seed", sy.seed, "Generator seed")->required();
  synth->add_option("--n", sy.n, "Number of records")->required()->check(CLI::PositiveNumber);
  synth->add_option("--profile", sy.profile, "Feature profile: desk or full")->check(CLI::IsMember({"desk", "full"}));
  synth->add_option("--out", sy.out, "Output directory (manifest.jsonl + features.bin)")->required();
  synth->add_option("--test-fraction", sy.test_fraction, "Share of records in the test split")->check(CLI::Range(0.0, 1.0));
  synth->add_flag("--no-wide", sy.no_wide, "Omit the 5x5 global feature grid");
  synth->add_option("--plant-label", sy.plant_label, "Category or attribute label to plant a score association on");
  synth->add_option("--plant-corr", sy.plant_corr, "Planted association strength")->check(CLI::Range(-1.0, 1.0));

  // shared model/data options
  fs::path data_dir, ckpt_path;
  std::string split = "test";
  unsigned threads = 1;
  auto add_data = [&](CLI::App* c) {
    c->add_option("--data", data_dir, "Dataset directory (default: $OVC_DATA_DIR)")
        ->envname("OVC_DATA_DIR")
        ->required()
        ->check(CLI::ExistingDirectory);
  };
  auto add_ckpt = [&](CLI::App* c) {
    c->add_option("--ckpt", ckpt_path, "Model checkpoint")->required()->check(CLI::ExistingFile);
  };
  auto add_threads = [&](CLI::App* c) {
    c->add_option("--threads", threads, "Inference worker threads")->check(CLI::PositiveNumber);
  };

  // train
  struct {
    std::string profile, arm = "oar_gaa", global = "narrow", schedule = "step";
    RelationFlags rel;
    std::optional<std::size_t> epochs, batch, steps;
    std::optional<double> lr;
    std::uint64_t seed = 0;
    fs::path out = "best.ckpt", final_out, log, history;
  } tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model with Adam on mean EMD");
  add_data(train_cmd);
  train_cmd->add_option("--profile", tr.profile, "Expected dataset profile (desk or full)")
      ->check(CLI::IsMember({"desk", "full"}));
  train_cmd->add_option("--arm", tr.arm, "Model arm: baseline, oar or oar_gaa")
      ->check(CLI::IsMember({"baseline", "oar", "oar_gaa"}));
  train_cmd->add_option("--global", tr.global, "Global feature path: narrow or wide")->check(CLI::IsMember({"narrow", "wide"}));
  train_cmd->add_flag("--no-visual", tr.rel.no_visual, "Drop the visual relation from the edge scorer");
  train_cmd->add_flag("--no-semantic", tr.rel.no_semantic, "Drop the semantic relation from the edge scorer");
  train_cmd->add_flag("--no-spatial", tr.rel.no_spatial, "Drop the spatial relation from the edge scorer");
  train_cmd->add_option("--epochs", tr.epochs, "Epochs (default 10)")->check(CLI::PositiveNumber);
  train_cmd->add_option("--batch", tr.batch, "Batch size (default 128, desk 8)")->check(CLI::Range(2, 1 << 20));
  train_cmd->add_option("--lr", tr.lr, "Base learning rate (default 3e-5)")->check(CLI::PositiveNumber);
  train_cmd->add_option("--schedule", tr.schedule, "Learning-rate schedule: step (/10 at epochs 3, 6, 9, ...) or constant")
      ->check(CLI::IsMember({"step", "constant"}));
  train_cmd->add_option("--steps", tr.steps, "Stop after this many updates, extending epochs as needed")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed", tr.seed, "Initialization and shuffling seed");
  train_cmd->add_option("--out", tr.out, "Best checkpoint path (default best.ckpt)");
  train_cmd->add_option("--final-out", tr.final_out, "Also write the last-step checkpoint here");
  train_cmd->add_option("--log", tr.log, "Per-step JSONL log (default <out>.log)");
  train_cmd->add_option("--history", tr.history, "Per-epoch evaluation JSONL");

  // eval
  fs::path eval_out;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a dataset split");
  add_data(eval_cmd);
  add_ckpt(eval_cmd);
  eval_cmd->add_option("--split", split, "train, test or all (default test)")->check(CLI::IsMember({"train", "test", "all"}));
  eval_cmd->add_option("--out", eval_out, "Report path (JSON); stdout when omitted");
  add_threads(eval_cmd);

  // infer
  fs::path infer_out;
  std::string infer_split = "all";
  auto* infer_cmd = app.add_subcommand("infer", "Per-image predicted distribution, mean and standard deviation");
  add_data(infer_cmd);
  add_ckpt(infer_cmd);
  infer_cmd->add_option("--split", infer_split, "train, test or all (default all)")
      ->check(CLI::IsMember({"train", "test", "all"}));
  infer_cmd->add_option("--out", infer_out, "TSV path; stdout when omitted");
  add_threads(infer_cmd);

  // export-attn
  fs::path attn_out;
  auto* export_cmd = app.add_subcommand("export-attn", "Run a model over a dataset and write its attention log");
  add_data(export_cmd);
  add_ckpt(export_cmd);
  export_cmd->add_option("--out", attn_out, "Attention log path")->required();

  // interpret
  struct {
    fs::path log, out;
    std::size_t top_k = 50;
    double margin = 0.04;
    std::string category, score = "predicted", method = "pearson";
    bool plots = false;
  } ip;
  auto* interp = app.add_subcommand("interpret", "Subjects and attention/score correlation tables from an attention log");
  interp->add_option("--log", ip.log, "Attention log")->required()->check(CLI::ExistingFile);
  interp->add_option("--top-k", ip.top_k, "Most frequent train-split labels to analyse (default 50)")
      ->check(CLI::PositiveNumber);
  interp->add_option("--margin", ip.margin, "Subject margin over other objects (default 0.04)");
  interp->add_option("--category", ip.category, "Restrict subject discovery to one image category");
  interp->add_option("--score", ip.score, "Score used in correlations: predicted or truth")
      ->check(CLI::IsMember({"predicted", "truth"}));
  interp->add_option("--method", ip.method, "pearson or spearman")->check(CLI::IsMember({"pearson", "spearman"}));
  interp->add_option("--out", ip.out, "Report directory; a summary goes to stdout when omitted");
  interp->add_flag("--plots", ip.plots, "Write SVG plots into the report directory");

  std::vector<const char*> argv{"ovc"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
    if (ip.plots && ip.out.empty() && interp->parsed()) throw UsageError("--plots needs --out");
    if (sy.plant_label.empty() != (synth->count("--plant-corr") == 0)) {
      if (synth->parsed()) throw UsageError("--plant-label and --plant-corr go together");
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const UsageError& e) {
    err << "ovc: usage error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (synth->parsed()) {
      data::SynthOptions opts;
      opts.wide = !sy.no_wide;
      opts.test_fraction = sy.test_fraction;
      if (!sy.plant_label.empty()) opts.plant = data::PlantConfig{sy.plant_label, sy.plant_corr};
      const auto ds = data::generate_synthetic(sy.seed, sy.n, parse_profile(sy.profile), opts);
      data::write_dataset_dir(ds, sy.out);
      err << "wrote " << ds.records.size() << " records to " << sy.out.string() << '\n';
    } else if (train_cmd->parsed()) {
      const auto ds = data::load_dataset_dir(data_dir);
      if (!tr.profile.empty() && parse_profile(tr.profile) != ds.profile) {
        throw UsageError("--profile " + tr.profile + " does not match dataset profile " +
                         std::string(to_string(ds.profile)));
      }
      train::TrainConfig cfg = train::default_config(ds.profile);
      cfg.model = model::make_config(ds.profile, model::parse_arm(tr.arm), model::parse_global_mode(tr.global),
                                     tr.rel.toggles());
      if (tr.epochs) cfg.epochs = *tr.epochs;
      if (tr.batch) cfg.batch_size = *tr.batch;
      if (tr.lr) cfg.base_lr = *tr.lr;
      cfg.schedule = train::parse_schedule(tr.schedule);
      cfg.max_steps = tr.steps;
      cfg.seed = tr.seed;
      const fs::path log_path = tr.log.empty() ? fs::path(tr.out.string() + ".log") : tr.log;
      if (log_path.has_parent_path()) fs::create_directories(log_path.parent_path());
      std::ofstream log(log_path, std::ios::binary | std::ios::trunc);
      if (!log) throw std::runtime_error("cannot write " + log_path.string());
      const auto res = train::train(ds, cfg, [&](const train::StepLog& s) { log << train::to_jsonl(s) << '\n'; });
      const std::vector<std::pair<std::string, std::string>> meta{{"seed", std::to_string(cfg.seed)},
                                                                  {"epoch", std::to_string(res.best_epoch)}};
      if (tr.out.has_parent_path()) fs::create_directories(tr.out.parent_path());
      save_checkpoint(model::to_checkpoint(res.best_model, meta), tr.out);
      if (!tr.final_out.empty()) {
        save_checkpoint(model::to_checkpoint(res.final_model, {{"seed", std::to_string(cfg.seed)}, {"epoch", "final"}}),
                        tr.final_out);
      }
      if (!tr.history.empty()) {
        std::ostringstream h;
        for (const auto& e : res.epochs) {
          nlohmann::ordered_json j;
          j["epoch"] = e.epoch;
          j["lr"] = e.lr;
          j["train_loss"] = e.train_loss;
          j["eval"] = e.eval ? metrics::to_json(*e.eval) : nlohmann::ordered_json();
          h << j.dump() << '\n';
        }
        write_text(tr.history, h.str());
      }
      err << "trained " << res.steps << " steps; best epoch " << res.best_epoch << " -> " << tr.out.string() << '\n';
    } else if (eval_cmd->parsed()) {
      const auto ds = data::load_dataset_dir(data_dir);
      const auto m = model::from_checkpoint(load_checkpoint(ckpt_path));
      auto recs = select(ds, split);
      if (recs.empty()) throw std::runtime_error("split '" + split + "' has no records");
      const auto preds = predict_parallel(m, recs, threads);
      std::vector<data::RatingDistribution> p, g;
      for (std::size_t i = 0; i < recs.size(); ++i) {
        p.push_back(preds[i].distribution);
        g.push_back(recs[i]->distribution());
      }
      const std::string report = metrics::to_json(metrics::evaluate(p, g)).dump(2) + "\n";
      if (eval_out.empty()) out << report;
      else write_text(eval_out, report);
    } else if (infer_cmd->parsed()) {
      const auto ds = data::load_dataset_dir(data_dir);
      const auto m = model::from_checkpoint(load_checkpoint(ckpt_path));
      const auto recs = select(ds, infer_split);
      const auto preds = predict_parallel(m, recs, threads);
      std::ostringstream s;
      s << "id\tmean\tstd";
      for (std::size_t k = 1; k <= kNumBuckets; ++k) s << "\tp" << k;
      s << '\n';
      for (std::size_t i = 0; i < recs.size(); ++i) {
        const auto& d = preds[i].distribution;
        s << recs[i]->id << '\t' << format_double(metrics::dist_mean(d)) << '\t' << format_double(metrics::dist_std(d));
        for (double v : d.p) s << '\t' << format_double(v);
        s << '\n';
      }
      if (infer_out.empty()) out << s.str();
      else write_text(infer_out, s.str());
    } else if (export_cmd->parsed()) {
      const auto ds = data::load_dataset_dir(data_dir);
      const auto m = model::from_checkpoint(load_checkpoint(ckpt_path));
      const auto log = interpret::export_attention(m, ds);
      if (attn_out.has_parent_path()) fs::create_directories(attn_out.parent_path());
      interpret::save_log(log, attn_out);
      err << "wrote attention for " << log.images.size() << " images to " << attn_out.string() << '\n';
    } else if (interp->parsed()) {
      const auto log = interpret::load_log(ip.log);
      interpret::CorrelationOptions opts;
      opts.top_k = ip.top_k;
      opts.score = interpret::parse_score_source(ip.score);
      opts.method = interpret::parse_method(ip.method);
      const auto subjects = interpret::discover_subjects(log, ip.category, ip.margin);
      std::ostringstream subj;
      interpret::write_subjects(subjects, subj);

      struct Named {
        std::string file;
        std::optional<interpret::CorrelationTable> table;
      };
      std::vector<Named> tables;
      const bool has_alpha =
          std::any_of(log.images.begin(), log.images.end(), [](const auto& im) { return !im.alpha.empty(); });
      for (auto kind : {interpret::LabelKind::category, interpret::LabelKind::attribute}) {
        const std::string k = kind == interpret::LabelKind::category ? "category" : "attribute";
        tables.push_back({k + "_correlation.tsv", interpret::attention_score_correlation(log, kind, opts)});
        if (has_alpha) tables.push_back({k + "_pair_correlation.tsv", interpret::pair_attention_correlation(log, kind, opts)});
      }
      nlohmann::ordered_json summary;
      summary["images"] = log.images.size();
      summary["subject_images"] = subjects.images;
      if (!subjects.diagnostic.empty()) summary["subject_diagnostic"] = subjects.diagnostic;
      auto subj_json = nlohmann::ordered_json::array();
      for (const auto& s : subjects.subjects) subj_json.push_back({{"label", s.label}, {"delta", s.delta}});
      summary["subjects"] = subj_json;
      for (const auto& t : tables) {
        try {
          summary["cross_split"][t.file] = interpret::cross_split_correlation(*t.table);
        } catch (const std::invalid_argument&) {
          summary["cross_split"][t.file] = nullptr;
        }
      }
      if (ip.out.empty()) {
        out << summary.dump(2) << '\n' << subj.str();
        for (const auto& t : tables) {
          out << "# " << t.file << '\n';
          interpret::write_tsv(*t.table, out);
        }
      } else {
        fs::create_directories(ip.out);
        write_text(ip.out / "subjects.tsv", subj.str());
        for (const auto& t : tables) {
          std::ostringstream s;
          interpret::write_tsv(*t.table, s);
          write_text(ip.out / t.file, s.str());
        }
        write_text(ip.out / "summary.json", summary.dump(2) + "\n");
        if (ip.plots) {
          write_text(ip.out / "subjects.svg", interpret::subject_boxplot_svg(log, subjects, ip.category));
          for (auto kind : {interpret::LabelKind::category, interpret::LabelKind::attribute}) {
            const bool cat = kind == interpret::LabelKind::category;
            const auto& t = *tables[cat ? 0 : (has_alpha ? 2 : 1)].table;
            for (const auto& row : t.rows) {
              if (!row.test) continue;
              const auto [x, y] = interpret::label_samples(log, kind, row.label, Split::test, opts.score);
              write_text(ip.out / "plots" / ((cat ? "category-" : "attribute-") + row.label + ".svg"),
                         interpret::scatter_svg(x, y, row.label + " (test, r = " + format_double(*row.test) + ")"));
            }
          }
        }
      }
    }
  } catch (const UsageError& e) {
    err << "ovc: usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "ovc: error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace ovc::cli
