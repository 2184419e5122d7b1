#include "lfsr/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "lfsr/checkpoint.hpp"
#include "lfsr/csv.hpp"
#include "lfsr/errors.hpp"
#include "lfsr/eval.hpp"
#include "lfsr/lesion_prep.hpp"
#include "lfsr/nifti.hpp"
#include "lfsr/pipeline.hpp"

namespace lfsr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool json = false;
  int workers = 0;  // 0: take from config
  std::string config;
};

struct Done {
  std::string message;
  json summary;
  int code = kOk;
};

PipelineConfig load_cfg(const Common& c) {
  PipelineConfig cfg = c.config.empty() ? toy_preset() : load_config(c.config);
  if (c.seed_set) cfg.seed = c.seed;
  if (c.workers > 0) cfg.workers = c.workers;
  cfg.validate();
  return cfg;
}

std::string sample_name(std::uint64_t i, const char* part) {
  std::ostringstream s;
  s << "sample_" << std::setw(5) << std::setfill('0') << i << "_" << part << ".nii.gz";
  return s.str();
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

// ---------------------------------------------------------------------------

struct PrepArgs {
  std::string image, seg, out_image, out_seg;
  std::vector<std::int32_t> wm_labels{2};
  int search_radius = 5, patch_radius = 1;
};

Done cmd_prep(const PrepArgs& a, const Common& c) {
  const Volume image = io::read_volume(a.image);
  const LabelVolume seg = io::read_label_volume(a.seg);
  lesions::EmOptions em;
  em.seed = c.seed;
  const auto split = lesions::split_white_matter(image, seg, a.wm_labels, em);
  Volume out = image;
  if (split.reliable_lesion_class && split.abnormal_voxels > 0) {
    const std::int32_t abnormal[] = {split.abnormal_label};
    out = lesions::inpaint(image, lesions::mask_from_labels(split.labels, abnormal),
                           {a.search_radius, a.patch_radius});
  }
  io::write_nifti(out, a.out_image);
  io::write_nifti(split.labels, a.out_seg);
  Done d;
  d.summary = {{"wm_voxels", split.wm_voxels},
               {"abnormal_voxels", split.abnormal_voxels},
               {"abnormal_label", split.abnormal_label},
               {"reliable_lesion_class", split.reliable_lesion_class},
               {"out_image", a.out_image},
               {"out_seg", a.out_seg}};
  d.message = "prep-lesions: " + std::to_string(split.abnormal_voxels) + " of " + std::to_string(split.wm_voxels) +
              " white-matter voxels abnormal" +
              (split.reliable_lesion_class ? ", inpainted" : " (no reliable lesion class, image unchanged)");
  return d;
}

struct HyperArgs {
  std::vector<std::string> t1, t2, seg;
  double inflation = 5.0;
  std::string out;
};

Done cmd_hyper(const HyperArgs& a, const Common&) {
  if (a.t1.size() != a.t2.size() || a.t1.size() != a.seg.size())
    throw InputError("--t1, --t2 and --seg must be given the same number of times");
  std::vector<ExampleScan> scans;
  std::map<std::int32_t, std::string> names;
  for (std::size_t n = 0; n < a.t1.size(); ++n) {
    ExampleScan s{io::read_volume(a.t1[n]), io::read_volume(a.t2[n]), io::read_label_volume(a.seg[n])};
    if (!same_geometry(s.t1.grid(), s.seg.grid()) || !same_geometry(s.t2.grid(), s.seg.grid()))
      throw GeometryError("scan " + std::to_string(n) + ": T1, T2 and segmentation grids differ");
    for (const auto& e : s.seg.table()) names.emplace(e.id, e.name);
    scans.push_back(std::move(s));
  }
  LabelTable table;
  for (const auto& [id, name] : names) table.push_back({id, name});
  const auto h = estimate_hyperparams(scans, table, a.inflation);
  save_hyperparams(h, a.out);
  Done d;
  d.summary = {{"scans", scans.size()}, {"labels", h.labels.size()}, {"out", a.out}};
  d.message = "estimate-hyperparams: " + std::to_string(h.labels.size()) + " labels from " +
              std::to_string(scans.size()) + " scans -> " + a.out;
  return d;
}

struct GenArgs {
  std::uint64_t n = 0;
  std::string out;
};

Done cmd_generate(const GenArgs& a, const Common& c, std::ostream& err) {
  const PipelineConfig cfg = load_cfg(c);
  auto pool = pipeline::load_sources(cfg);
  const std::size_t pool_size = pool.size();
  const auto factory = pipeline::make_factory(cfg, std::move(pool), pipeline::load_or_derive_hyperparams(cfg),
                                              Rng(cfg.seed).child("generate").seed());
  const fs::path dir(a.out);
  ensure_dir(dir);
  std::map<std::uint64_t, std::uint64_t> index_of;
  for (std::uint64_t i = 0; i < a.n; ++i) index_of[factory.sample_seed(i)] = i;

  io::CsvTable manifest;
  manifest.header = {"index", "seed", "source", "lf_t1", "lf_t2", "target", "seg"};
  manifest.rows.resize(a.n);
  gen::SampleStream stream(factory, 0, a.n, cfg.workers);
  std::uint64_t written = 0;
  while (auto s = stream.next()) {
    const std::uint64_t i = index_of.at(s->seed);
    const std::string f1 = sample_name(i, "lf_t1"), f2 = sample_name(i, "lf_t2"), ft = sample_name(i, "target"),
                      fs_ = sample_name(i, "seg");
    io::write_nifti(s->lf_t1, dir / f1);
    io::write_nifti(s->lf_t2, dir / f2);
    io::write_nifti(s->target, dir / ft);
    io::write_nifti(s->seg, dir / fs_);
    manifest.rows[i] = {std::to_string(i), std::to_string(s->seed), std::to_string(factory.source_index(i)), f1, f2, ft, fs_};
    if (++written % 10 == 0) err << "generate: " << written << "/" << a.n << "\n";
  }
  io::write_csv(manifest, dir / "manifest.csv");
  Done d;
  d.summary = {{"samples", a.n}, {"sources", pool_size}, {"out", a.out}, {"seed", cfg.seed}};
  d.message = "generate: wrote " + std::to_string(a.n) + " samples to " + a.out;
  return d;
}

struct SegArgs {
  std::string out;
  std::int64_t iterations = -1;
  int heldout = 4;
};

Done cmd_pretrain(const SegArgs& a, const Common& c, std::ostream& err) {
  PipelineConfig cfg = load_cfg(c);
  if (a.iterations >= 0) cfg.training.segmenter_iterations = static_cast<std::uint64_t>(a.iterations);
  auto pool = pipeline::load_sources(cfg);
  const int labels = static_cast<int>(pool.front().seg.table().size());
  auto hyper = pipeline::load_or_derive_hyperparams(cfg);
  const auto data = pipeline::make_factory(cfg, pool, hyper, Rng(cfg.seed).child("segmenter-data").seed());
  std::vector<gen::SourceScan> held = cfg.sources.empty()
                                          ? pipeline::phantom_pool(cfg.phantoms, Rng(cfg.seed).child("heldout-pool").seed())
                                          : pool;
  const auto heldout = pipeline::make_factory(cfg, std::move(held), hyper, Rng(cfg.seed).child("segmenter-heldout").seed());
  const auto sch = pipeline::segmenter_schedule(cfg);
  const auto res = train::pretrain_segmenter(
      pipeline::segmenter_spec(cfg.network, labels), data, heldout, a.heldout, sch,
      Rng(cfg.seed).child("segmenter-init").seed(), cfg.training.segmenter_dice_floor,
      [&](std::uint64_t it, double loss) {
        if (it % 100 == 0) err << "pretrain-seg: iteration " << it << " loss " << loss << "\n";
      });
  save_checkpoint(make_checkpoint(res.net, "segmentation", res.labels, true), a.out);
  Done d;
  d.summary = {{"iterations", sch.iterations}, {"heldout_dice", res.heldout_dice},
               {"dice_floor", cfg.training.segmenter_dice_floor}, {"met_floor", res.met_floor}, {"out", a.out}};
  d.message = "pretrain-seg: " + res.report + " -> " + a.out;
  if (!res.met_floor) d.code = kNumericFailure;
  return d;
}

struct TrainArgs {
  std::string seg, out, loss_csv;
  std::int64_t iterations = -1;
  double lambda = -1.0;
};

Done cmd_train(const TrainArgs& a, const Common& c, std::ostream& err) {
  PipelineConfig cfg = load_cfg(c);
  if (a.iterations >= 0) cfg.training.iterations = static_cast<std::uint64_t>(a.iterations);
  if (a.lambda >= 0.0) cfg.lambda = a.lambda;
  cfg.validate();
  std::unique_ptr<nn::UNet<float>> seg;
  if (!a.seg.empty()) {
    const Checkpoint ck = load_checkpoint(a.seg);
    if (ck.kind != "segmentation" || !ck.frozen) throw InputError(a.seg + " is not a frozen segmentation checkpoint");
    seg = std::make_unique<nn::UNet<float>>(ck.network());
  } else if (cfg.lambda > 0.0) {
    throw InputError("--seg is required when lambda > 0");
  }
  auto pool = pipeline::load_sources(cfg);
  const auto factory = pipeline::make_factory(cfg, std::move(pool), pipeline::load_or_derive_hyperparams(cfg),
                                              Rng(cfg.seed).child("sr-data").seed());
  const auto sch = pipeline::sr_schedule(cfg);
  auto state = train::init_sr(pipeline::synthesis_spec(cfg.network), Rng(cfg.seed).child("sr-init").seed(), sch);
  train::train_sr(state, factory, cfg.lambda > 0.0 ? seg.get() : nullptr, cfg.lambda, sch,
                  [&](std::uint64_t it, double loss) {
                    if (it % 100 == 0) err << "train: iteration " << it << " loss " << loss << "\n";
                  });
  save_checkpoint(make_checkpoint(state.net, "synthesis"), a.out);
  if (!a.loss_csv.empty()) {
    io::CsvTable t;
    t.header = {"iteration", "loss", "intensity_loss", "mean_dice"};
    for (std::size_t i = 0; i < state.loss_history.size(); ++i) {
      std::ostringstream l, li, ld;
      l.precision(17);
      li.precision(17);
      ld.precision(17);
      l << state.loss_history[i];
      li << state.intensity_history[i];
      ld << state.dice_history[i];
      t.rows.push_back({std::to_string(i + 1), l.str(), li.str(), ld.str()});
    }
    io::write_csv(t, a.loss_csv);
  }
  Done d;
  const double last = state.loss_history.empty() ? 0.0 : state.loss_history.back();
  d.summary = {{"iterations", state.iteration}, {"lambda", cfg.lambda}, {"final_loss", last}, {"out", a.out}};
  d.message = "train: " + std::to_string(state.iteration) + " iterations, final loss " + std::to_string(last) +
              " -> " + a.out;
  return d;
}

struct InferArgs {
  std::string t1, t2, out, model;
};

Done cmd_infer(const InferArgs& a, const Common&) {
  std::string model = a.model;
  if (model.empty())
    if (const char* env = std::getenv("LFSR_MODEL")) model = env;
  if (model.empty()) throw InputError("no model: pass --model or set LFSR_MODEL");
  const Checkpoint ck = load_checkpoint(model);
  if (ck.kind != "synthesis") throw InputError(model + " is not a synthesis checkpoint");
  const auto net = ck.network();
  const Volume out = train::infer(net, io::read_volume(a.t1), io::read_volume(a.t2));
  io::write_nifti(out, a.out);
  Done d;
  d.summary = {{"out", a.out}, {"dims", out.dims()}, {"model", model}};
  d.message = "infer: wrote " + a.out;
  return d;
}

struct EvalArgs {
  std::string volumes, segs, gold = "gold", out;
  std::vector<std::string> composites;
};

std::vector<eval::CompositeRoi> parse_composites(const std::vector<std::string>& specs) {
  if (specs.empty()) return eval::default_composites();
  std::vector<eval::CompositeRoi> out;
  for (const auto& s : specs) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("composite must look like NAME=id,id,...: " + s);
    eval::CompositeRoi c{s.substr(0, eq), {}};
    std::stringstream ids(s.substr(eq + 1));
    std::string tok;
    while (std::getline(ids, tok, ',')) {
      try {
        c.labels.push_back(std::stoi(tok));
      } catch (const std::exception&) {
        throw ConfigError("bad label id \"" + tok + "\" in composite " + c.name);
      }
    }
    out.push_back(std::move(c));
  }
  return out;
}

Done cmd_evaluate(const EvalArgs& a, const Common&) {
  if (a.volumes.empty() == a.segs.empty()) throw InputError("give exactly one of --volumes or --segs");
  std::vector<eval::VolumeTable> tables;
  if (!a.volumes.empty()) {
    tables = eval::read_volume_csv(a.volumes);
  } else {
    const auto comps = parse_composites(a.composites);
    const io::CsvTable csv = io::read_csv(a.segs);
    const std::size_t cs = csv.column("subject"), cm = csv.column("method"), cp = csv.column("path");
    const fs::path base = fs::path(a.segs).parent_path();
    for (const auto& row : csv.rows) {
      auto it = std::find_if(tables.begin(), tables.end(), [&](const eval::VolumeTable& t) { return t.method == row[cm]; });
      if (it == tables.end()) {
        tables.push_back({row[cm], {}, {}, {}});
        it = tables.end() - 1;
      }
      fs::path p(row[cp]);
      if (p.is_relative()) p = base / p;
      it->add(row[cs], eval::roi_volumes(io::read_label_volume(p), comps));
    }
  }
  const auto g = std::find_if(tables.begin(), tables.end(), [&](const eval::VolumeTable& t) { return t.method == a.gold; });
  if (g == tables.end()) throw InputError("no rows for gold method \"" + a.gold + "\"");
  const eval::VolumeTable gold = *g;
  std::vector<eval::VolumeTable> methods;
  for (const auto& t : tables)
    if (t.method != a.gold) methods.push_back(t);
  if (methods.empty()) throw InputError("no methods to compare against \"" + a.gold + "\"");
  const auto rep = eval::build_report(gold, methods);
  eval::write_report(rep, a.out);
  Done d;
  json rows = json::array();
  for (const auto& r : rep.rows)
    rows.push_back({{"roi", r.roi}, {"method", r.method}, {"r", r.pearson.r}, {"p", r.pearson.p},
                    {"bias", r.bland_altman.bias}, {"rpc", r.bland_altman.rpc}, {"ks_p", r.bland_altman.ks_p}});
  d.summary = {{"subjects", gold.subjects.size()}, {"rois", gold.rois.size()}, {"rows", rows}, {"out", a.out}};
  d.message = "evaluate: " + std::to_string(methods.size()) + " methods x " + std::to_string(gold.rois.size()) +
              " ROIs over " + std::to_string(gold.subjects.size()) + " subjects -> " + a.out;
  return d;
}

Done cmd_selftest(const Common& c, std::ostream& err) {
  const auto checks = run_selftest(c.seed);
  Done d;
  json arr = json::array();
  int failed = 0;
  for (const auto& ch : checks) {
    err << (ch.passed ? "PASS " : "FAIL ") << ch.name << (ch.detail.empty() ? "" : ": " + ch.detail) << "\n";
    arr.push_back({{"name", ch.name}, {"passed", ch.passed}, {"detail", ch.detail}});
    failed += ch.passed ? 0 : 1;
  }
  d.summary = {{"checks", arr}, {"failed", failed}};
  d.message = "selftest: " + std::to_string(checks.size() - failed) + "/" + std::to_string(checks.size()) + " passed";
  if (failed) d.code = kNumericFailure;
  return d;
}

void add_common(CLI::App* sub, Common& c, bool with_config, bool with_workers) {
  sub->add_option("--seed", c.seed, "Root seed; every random stream derives from it")
      ->each([&c](const std::string&) { c.seed_set = true; });
  sub->add_flag("--json", c.json, "Print a JSON summary to standard output");
  if (with_config)
    sub->add_option("--config", c.config, "Pipeline config JSON (defaults to the toy preset)")->envname("LFSR_CONFIG");
  if (with_workers)
    sub->add_option("--workers", c.workers, "Generator worker threads; 1 is the deterministic mode")
        ->check(CLI::PositiveNumber);
}

int error_code(const std::exception& e) {
  if (dynamic_cast<const TrainingError*>(&e) || dynamic_cast<const StatsError*>(&e)) return kNumericFailure;
  return kDataError;
}

}  // namespace

CommandOutcome run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Low-field MRI super-resolution pipeline"};
  app.name(args.empty() ? "lfsr" : fs::path(args[0]).filename().string());
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  Common c;
  PrepArgs prep;
  HyperArgs hyper;
  GenArgs gen_args;
  SegArgs seg_args;
  TrainArgs train_args;
  InferArgs infer_args;
  EvalArgs eval_args;

  auto* s_prep = app.add_subcommand("prep-lesions", "Split white matter into normal/abnormal and inpaint lesions");
  s_prep->add_option("--image", prep.image, "HR intensity image (NIfTI)")->required();
  s_prep->add_option("--seg", prep.seg, "Segmentation (NIfTI labels)")->required();
  s_prep->add_option("--wm-label", prep.wm_labels, "White-matter label id(s)")->capture_default_str();
  s_prep->add_option("--out-image", prep.out_image, "Inpainted image output")->required();
  s_prep->add_option("--out-seg", prep.out_seg, "Segmentation with the abnormal label added")->required();
  s_prep->add_option("--search-radius", prep.search_radius, "Inpainting search radius (voxels)")->capture_default_str();
  s_prep->add_option("--patch-radius", prep.patch_radius, "Inpainting patch radius (voxels)")->capture_default_str();
  add_common(s_prep, c, false, false);

  auto* s_hyper = app.add_subcommand("estimate-hyperparams", "Robust GMM priors from example low-field scans");
  s_hyper->add_option("--t1", hyper.t1, "T1 example scan (repeat per scan)")->required();
  s_hyper->add_option("--t2", hyper.t2, "T2 example scan (repeat per scan)")->required();
  s_hyper->add_option("--seg", hyper.seg, "Segmentation of the example scan (repeat per scan)")->required();
  s_hyper->add_option("--inflation", hyper.inflation, "Spread inflation factor")->capture_default_str();
  s_hyper->add_option("--out", hyper.out, "Output JSON")->required();
  add_common(s_hyper, c, false, false);

  auto* s_gen = app.add_subcommand("generate", "Write synthetic training samples and a manifest");
  s_gen->add_option("--n", gen_args.n, "Number of samples")->required();
  s_gen->add_option("--out", gen_args.out, "Output directory")->required();
  add_common(s_gen, c, true, true);

  auto* s_seg = app.add_subcommand("pretrain-seg", "Pre-train the frozen segmentation network");
  s_seg->add_option("--out", seg_args.out, "Checkpoint output")->required();
  s_seg->add_option("--iterations", seg_args.iterations, "Override the configured iteration count");
  s_seg->add_option("--heldout", seg_args.heldout, "Held-out samples for the Dice check")->capture_default_str();
  add_common(s_seg, c, true, true);

  auto* s_train = app.add_subcommand("train", "Train the super-resolution network");
  s_train->add_option("--seg", train_args.seg, "Frozen segmentation checkpoint (needed when lambda > 0)");
  s_train->add_option("--out", train_args.out, "Checkpoint output")->required();
  s_train->add_option("--iterations", train_args.iterations, "Override the configured iteration count");
  s_train->add_option("--lambda", train_args.lambda, "Override the segmentation loss weight");
  s_train->add_option("--loss-csv", train_args.loss_csv, "Write the per-iteration loss history");
  add_common(s_train, c, true, true);

  auto* s_infer = app.add_subcommand("infer", "Synthesise an HR volume from low-field T1 and T2 scans");
  s_infer->add_option("--t1", infer_args.t1, "T1-weighted input (NIfTI)")->required();
  s_infer->add_option("--t2", infer_args.t2, "T2-weighted input (NIfTI)")->required();
  s_infer->add_option("--o", infer_args.out, "Output NIfTI")->required();
  s_infer->add_option("--model", infer_args.model, "Synthesis checkpoint")->envname("LFSR_MODEL");
  add_common(s_infer, c, false, false);

  auto* s_eval = app.add_subcommand("evaluate", "Agreement statistics of ROI volumes against a gold standard");
  s_eval->add_option("--volumes", eval_args.volumes, "CSV with subject,roi,volume,method");
  s_eval->add_option("--segs", eval_args.segs, "CSV with subject,method,path to label volumes");
  s_eval->add_option("--composite", eval_args.composites, "Composite ROI NAME=id,id,... (with --segs)");
  s_eval->add_option("--gold", eval_args.gold, "Method name of the gold standard")->capture_default_str();
  s_eval->add_option("--out", eval_args.out, "Report directory")->required();
  add_common(s_eval, c, false, false);

  auto* s_self = app.add_subcommand("selftest", "Run the embedded invariant checks");
  add_common(s_self, c, false, false);

  std::vector<const char*> argv;
  argv.push_back(args.empty() ? "lfsr" : args[0].c_str());
  for (std::size_t i = 1; i < args.size(); ++i) argv.push_back(args[i].c_str());

  CommandOutcome res;
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    res.exit_code = code == 0 ? kOk : kUsage;
    res.message = code == 0 ? "help" : e.what();
    return res;
  }

  Done d;
  try {
    if (s_prep->parsed()) d = cmd_prep(prep, c);
    else if (s_hyper->parsed()) d = cmd_hyper(hyper, c);
    else if (s_gen->parsed()) d = cmd_generate(gen_args, c, err);
    else if (s_seg->parsed()) d = cmd_pretrain(seg_args, c, err);
    else if (s_train->parsed()) d = cmd_train(train_args, c, err);
    else if (s_infer->parsed()) d = cmd_infer(infer_args, c);
    else if (s_eval->parsed()) d = cmd_evaluate(eval_args, c);
    else d = cmd_selftest(c, err);
  } catch (const std::exception& e) {
    res.exit_code = error_code(e);
    res.message = std::string("error: ") + e.what();
    json j = {{"ok", false}, {"exit_code", res.exit_code}, {"error", e.what()}};
    if (const auto* te = dynamic_cast<const TrainingError*>(&e); te && !te->snapshot().empty()) {
      j["snapshot"] = json::parse(te->snapshot(), nullptr, false);
      err << "snapshot: " << te->snapshot() << "\n";
    }
    res.json = j.dump();
    err << res.message << "\n";
    if (c.json) out << res.json << "\n";
    return res;
  }
  res.exit_code = d.code;
  res.message = d.message;
  d.summary["ok"] = d.code == kOk;
  d.summary["exit_code"] = d.code;
  res.json = d.summary.dump();
  err << res.message << "\n";
  if (c.json) out << res.json << "\n";
  return res;
}

}  // namespace lfsr::cli
