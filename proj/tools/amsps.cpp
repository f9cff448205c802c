#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>

#include "amsps/checkpoint.hpp"
#include "amsps/cider.hpp"
#include "amsps/synthetic.hpp"
#include "amsps/trainer.hpp"

namespace fs = std::filesystem;
using namespace amsps;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  bool verbose = false;
};

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

void print_report(std::ostream& os, const RecallReport& r) {
  os << "direction\tR@1\tR@5\tR@10\n";
  os << "i2t";
  for (double v : r.i2t) os << '\t' << fmt("%.2f", v);
  os << "\nt2i";
  for (double v : r.t2i) os << '\t' << fmt("%.2f", v);
  os << "\nR@sum\t" << fmt("%.2f", r.r_sum) << '\n';
}

std::string report_tsv(const RecallReport& r) {
  std::string out = "i2t_r1\ti2t_r5\ti2t_r10\tt2i_r1\tt2i_r5\tt2i_r10\trsum\n";
  for (double v : r.i2t) out += fmt("%.6f", v) + "\t";
  for (double v : r.t2i) out += fmt("%.6f", v) + "\t";
  out += fmt("%.6f", r.r_sum) + "\n";
  return out;
}

TrainConfig config_from(const Globals& g) {
  if (g.config.empty()) throw Error(ErrorCategory::Usage, "--config is required");
  TrainConfig c = load_config(g.config);
  if (g.seed) c.seed = *g.seed;
  if (c.manifest.empty()) throw Error(ErrorCategory::Usage, "config has no manifest");
  return c;
}

// --- synth --------------------------------------------------------------------

struct SynthArgs {
  SynthParams params;
  std::string out;
};

int run_synth(const Globals& g, SynthArgs a) {
  if (g.seed) a.params.seed = *g.seed;
  const auto manifest = generate_synthetic(a.params, a.out);
  std::cout << manifest.string() << '\n';
  return 0;
}

// --- train --------------------------------------------------------------------

struct TrainArgs {
  std::string phase = "both";
  std::string out;
  std::string resume;
};

int run_train(const Globals& g, const TrainArgs& a) {
  const bool do1 = a.phase == "1" || a.phase == "both";
  const bool do2 = a.phase == "2" || a.phase == "both";
  TrainConfig config = config_from(g);
  const Dataset data = load_dataset(fs::path(config.manifest));

  std::optional<Checkpoint> resumed;
  if (!a.resume.empty()) {
    resumed = load_checkpoint(a.resume);
    if (resumed->dataset_fingerprint != data.fingerprint) {
      throw Error(ErrorCategory::Data, "checkpoint was trained on a different dataset (fingerprint " +
                                           hex64(resumed->dataset_fingerprint) + ", data " +
                                           hex64(data.fingerprint) + ")");
    }
  }
  const TrainingData td = prepare_training_data(data, resumed ? &resumed->vocabulary : nullptr);
  ModelState state = resumed ? resumed->state : init_state(config, td);
  if (do2 && !do1 && state.phase == 1 && state.epoch < config.epochs_phase1) {
    throw Error(ErrorCategory::Usage, "phase 2 needs a completed phase-1 checkpoint (--resume)");
  }

  fs::create_directories(a.out);
  std::ofstream log(fs::path(a.out) / "metrics.tsv", std::ios::binary);
  if (!log) throw Error(ErrorCategory::Io, "cannot write " + (fs::path(a.out) / "metrics.tsv").string());
  log << metrics_header();
  std::uint64_t last_epoch = static_cast<std::uint64_t>(-1);
  const MetricsSink sink = [&](const StepMetrics& m) {
    log << format_metrics(m);
    if (g.verbose && m.epoch != last_epoch) {
      last_epoch = m.epoch;
      std::cerr << "phase " << m.phase << " epoch " << m.epoch << " step " << m.step << " loss "
                << fmt("%.6f", m.total) << '\n';
    }
  };

  auto save = [&](const std::string& name) {
    Checkpoint ckpt{config, state, data.fingerprint, td.vocab.words()};
    save_checkpoint(fs::path(a.out) / name, ckpt);
  };
  const auto opts = config.consensus_options();

  if (do1 && state.phase == 1) {
    state = run_phase1(config, td, std::move(state), sink);
    save("phase1.ckpt");
    if (!data.test.empty()) {
      std::cout << "phase 1, test split\n";
      print_report(std::cout, evaluate_split(state.params, td, Split::Test, opts));
    }
  }
  if (do2) {
    const PredictiveCandidates predictive =
        config.predictive_images.empty()
            ? predictive_from_model(state.params, td, opts)
            : predictive_from_files(config.predictive_images, config.predictive_captions, td);
    state = run_phase2(config, td, std::move(state), predictive, sink);
    save("phase2.ckpt");
    if (!data.test.empty()) {
      std::cout << "phase 2, test split\n";
      print_report(std::cout, evaluate_split(state.params, td, Split::Test, opts));
    }
  }
  return 0;
}

// --- shared checkpoint loading ----------------------------------------------------

struct Loaded {
  Checkpoint ckpt;
  Dataset data;
  TrainingData td;
};

Loaded load_for_inference(const std::string& checkpoint, const std::string& features, const std::string& captions) {
  Loaded l;
  l.ckpt = load_checkpoint(checkpoint);
  DatasetManifest m = load_manifest(l.ckpt.config.manifest);
  if (!features.empty() || !captions.empty()) {
    if (features.empty() || captions.empty()) {
      throw Error(ErrorCategory::Usage, "--features and --captions must be given together");
    }
    m.image_features = fs::absolute(features).string();
    m.captions = fs::absolute(captions).string();
    // Every captioned image of the supplied files becomes the test gallery.
    std::set<std::size_t> ids;
    for (const auto& r : load_captions(captions)) {
      try {
        ids.insert(std::stoul(r.image_id));
      } catch (const std::exception&) {
        throw Error(ErrorCategory::Data, "caption '" + r.caption_id + "': image id '" + r.image_id +
                                             "' is not a feature block index");
      }
    }
    m.train.clear();
    m.val.clear();
    m.test.clear();
    for (auto id : ids) m.test.push_back(std::to_string(id));
  }
  l.data = load_dataset(m);
  l.td = prepare_training_data(l.data, &l.ckpt.vocabulary);
  return l;
}

bool parse_on_off(const std::string& s) {
  if (s == "on") return true;
  if (s == "off") return false;
  throw Error(ErrorCategory::Usage, "--rerank expects on or off");
}

// --- eval ---------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint, features, captions, split = "test", rerank = "off", out;
  std::optional<double> gamma;
};

int run_eval(const Globals&, const EvalArgs& a) {
  Loaded l = load_for_inference(a.checkpoint, a.features, a.captions);
  const double gamma = a.gamma.value_or(l.ckpt.config.rerank_gamma);
  if (!(gamma > 0 && gamma <= 1)) throw Error(ErrorCategory::Usage, "--gamma must lie in (0, 1]");
  const auto report = evaluate_split(l.ckpt.state.params, l.td, parse_split(a.split),
                                     l.ckpt.config.consensus_options(), parse_on_off(a.rerank), gamma);
  print_report(std::cout, report);
  if (!a.out.empty()) write_file_atomic(a.out, report_tsv(report));
  return 0;
}

// --- query --------------------------------------------------------------------

struct QueryArgs {
  std::string checkpoint, image, caption, split = "test", rerank = "off";
  std::size_t top = 5;
};

int run_query(const Globals&, const QueryArgs& a) {
  if (a.image.empty() == a.caption.empty()) {
    throw Error(ErrorCategory::Usage, "give exactly one of --image or --caption");
  }
  Loaded l = load_for_inference(a.checkpoint, "", "");
  const auto& data = l.data;
  const auto emb = embed_split(l.ckpt.state.params, l.td, data.split(parse_split(a.split)),
                               l.ckpt.config.consensus_options());
  const auto r = rank_split(emb, parse_on_off(a.rerank), l.ckpt.config.rerank_gamma);
  auto local_of = [](const std::vector<std::size_t>& v, std::size_t x, const std::string& what) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i] == x) return i;
    }
    throw Error(ErrorCategory::Data, what + " is not in the chosen split");
  };
  if (!a.image.empty()) {
    const auto q = local_of(emb.view.images, data.image_index(a.image), "image " + a.image);
    const auto& order = r.i2t.order[q];
    for (std::size_t i = 0; i < std::min(a.top, order.size()); ++i) {
      const auto& c = data.captions[emb.view.captions[order[i]]];
      std::cout << i + 1 << '\t' << c.id << '\t' << fmt("%.6f", r.i2t.scores[q][i]) << '\t' << c.text << '\n';
    }
  } else {
    const auto q = local_of(emb.view.captions, data.caption_index(a.caption), "caption " + a.caption);
    const auto& order = r.t2i.order[q];
    for (std::size_t i = 0; i < std::min(a.top, order.size()); ++i) {
      const auto img = emb.view.images[order[i]];
      std::cout << i + 1 << '\t' << data.images[img].image_id << '\t' << fmt("%.6f", r.t2i.scores[q][i]) << '\n';
    }
  }
  return 0;
}

// --- mine ---------------------------------------------------------------------

struct MineArgs {
  std::string checkpoint, out;
};

int run_mine(const Globals& g, const MineArgs& a) {
  std::optional<Checkpoint> ckpt;
  TrainConfig config;
  if (!a.checkpoint.empty()) {
    ckpt = load_checkpoint(a.checkpoint);
    config = g.config.empty() ? ckpt->config : config_from(g);
  } else {
    config = config_from(g);
    if (config.predictive_images.empty()) {
      throw Error(ErrorCategory::Usage, "mine needs --checkpoint or predictive embedding files in the config");
    }
  }
  if (g.seed) config.seed = *g.seed;
  const Dataset data = load_dataset(fs::path(config.manifest));
  const TrainingData td = prepare_training_data(data, ckpt ? &ckpt->vocabulary : nullptr);
  const PredictiveCandidates predictive =
      config.predictive_images.empty()
          ? predictive_from_model(ckpt->state.params, td, config.consensus_options())
          : predictive_from_files(config.predictive_images, config.predictive_captions, td);
  // Same stream as the first phase-2 mining pass.
  const MiningPlan plan = mine_hard_negatives(predictive, td, config.k, config.q, config.a, mining_seed(config.seed, 0));
  std::string out = "anchor_image\tanchor_caption\tt_bar\tv_bar\tt_dbar\tv_dbar\n";
  for (const auto& q : plan.records) {
    out += data.images[q.anchor_image].image_id + '\t' + data.captions[q.anchor_caption].id + '\t' +
           data.captions[q.t_bar].id + '\t' + data.images[q.v_bar].image_id + '\t' + data.captions[q.t_dbar].id +
           '\t' + data.images[q.v_dbar].image_id + '\n';
  }
  if (a.out.empty()) {
    std::cout << out;
  } else {
    write_file_atomic(a.out, out);
  }
  return 0;
}

// --- cider --------------------------------------------------------------------

struct CiderArgs {
  std::string candidates, references;
};

int run_cider(const Globals&, const CiderArgs& a) {
  const auto refs = load_captions(a.references);
  std::map<std::string, std::vector<CaptionRecord>> by_image;
  for (const auto& r : refs) by_image[r.image_id].push_back(r);
  std::vector<std::vector<Words>> docs;
  for (const auto& [id, recs] : by_image) {
    std::vector<Words> d;
    for (const auto& r : recs) d.push_back(tokenize(r.text));
    docs.push_back(std::move(d));
  }
  if (docs.empty()) throw Error(ErrorCategory::Data, "reference file has no captions");
  const IdfTable idf = IdfTable::build(docs);
  for (const auto& cand : load_captions(a.candidates)) {
    const auto it = by_image.find(cand.image_id);
    if (it == by_image.end()) {
      throw Error(ErrorCategory::Data, "candidate '" + cand.caption_id + "': image " + cand.image_id +
                                           " has no references");
    }
    // A candidate drawn from the reference file is scored against the others.
    std::vector<Words> r;
    for (const auto& rec : it->second) {
      if (rec.caption_id != cand.caption_id) r.push_back(tokenize(rec.text));
    }
    const auto s = cider_score(tokenize(cand.text), r, idf);
    std::cout << cand.caption_id << '\t' << fmt("%.6f", s.value);
    for (double p : s.per_n) std::cout << '\t' << fmt("%.6f", p);
    std::cout << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hard-negative image-text matching: training, mining, evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Random seed (overrides the config)");
  app.add_option("--config", g.config, "Training config (JSON)");
  app.add_flag("-v,--verbose", g.verbose, "Progress on stderr");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic dataset");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--train", synth.params.n_train);
  s->add_option("--val", synth.params.n_val);
  s->add_option("--test", synth.params.n_test);
  s->add_option("--captions-per-image", synth.params.captions_per_image);
  s->add_option("--latent-dim", synth.params.latent_dim);
  s->add_option("--noise", synth.params.noise_sigma);
  s->add_option("--vocab", synth.params.vocab_size);
  s->add_option("--regions", synth.params.regions);
  s->add_option("--feature-dim", synth.params.feature_dim);
  s->add_option("--embed-dim", synth.params.embed_dim);
  s->add_option("--concepts", synth.params.concepts);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Run phase 1, phase 2 or both");
  t->add_option("--phase", train.phase)->check(CLI::IsMember({"1", "2", "both"}));
  t->add_option("--out", train.out, "Output directory for metrics and checkpoints")->required();
  t->add_option("--resume", train.resume, "Checkpoint to continue from");

  MineArgs mine;
  auto* m = app.add_subcommand("mine", "Write mined quadruples for every train caption");
  m->add_option("--checkpoint", mine.checkpoint, "Model providing the predictive embeddings");
  m->add_option("--out", mine.out, "Output TSV (stdout when omitted)");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Recall@K in both directions");
  e->add_option("--checkpoint", eval.checkpoint)->required();
  e->add_option("--features", eval.features, "Feature MatrixFile replacing the dataset's");
  e->add_option("--captions", eval.captions, "Caption file replacing the dataset's");
  e->add_option("--split", eval.split)->check(CLI::IsMember({"train", "val", "test"}));
  e->add_option("--rerank", eval.rerank)->check(CLI::IsMember({"on", "off"}));
  e->add_option("--gamma", eval.gamma);
  e->add_option("--out", eval.out, "Also write the table as TSV");

  CiderArgs cider;
  auto* c = app.add_subcommand("cider", "Score candidate captions against references");
  c->add_option("--candidates", cider.candidates)->required();
  c->add_option("--references", cider.references)->required();

  QueryArgs query;
  auto* q = app.add_subcommand("query", "Top matches for one image or caption");
  q->add_option("--checkpoint", query.checkpoint)->required();
  q->add_option("--image", query.image);
  q->add_option("--caption", query.caption);
  q->add_option("--split", query.split)->check(CLI::IsMember({"train", "val", "test"}));
  q->add_option("--rerank", query.rerank)->check(CLI::IsMember({"on", "off"}));
  q->add_option("--top", query.top);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : static_cast<int>(ErrorCategory::Usage);
  }

  try {
    if (*s) return run_synth(g, synth);
    if (*t) return run_train(g, train);
    if (*m) return run_mine(g, mine);
    if (*e) return run_eval(g, eval);
    if (*c) return run_cider(g, cider);
    if (*q) return run_query(g, query);
  } catch (const Error& err) {
    std::cerr << "error [" << category_name(err.category()) << "]: " << err.what() << '\n';
    return static_cast<int>(err.category());
  } catch (const std::filesystem::filesystem_error& err) {
    std::cerr << "error [io]: " << err.what() << '\n';
    return static_cast<int>(ErrorCategory::Io);
  }
  return 0;
}
