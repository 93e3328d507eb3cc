// wir: command-line front end for the writer retrieval pipeline.
//
//   wir synth     seeded synthetic descriptor corpus (DESC1 files)
//   wir patches   PGM pages -> contour-centred patches (PTCH1 files)
//   wir describe  PTCH1 -> DESC1 through the seeded projection
//   wir train     NetVLAD parameters (NVLD1) with semi-hard triplets
//   wir encode    global descriptors (GDSC1), optional PCA (PCA1)
//   wir evaluate  leave-one-out ranking, optional krNN re-ranking, metrics
//   wir sweep     PCA dimension sweep to CSV
//   wir replay    re-run a manifest and compare output hashes
//
// Exit codes: 0 ok, 1 replay mismatch, 2 input, 3 data, 4 shape,
// 5 gallery, 64 usage.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "manifest.hpp"
#include "wir/wir.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace wir::cli {
namespace {

enum Exit : int {
  kOk = 0,
  kReplayMismatch = 1,
  kInput = 2,
  kData = 3,
  kShape = 4,
  kGallery = 5,
  kUsage = 64,
};

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::InsufficientWriters:
    case Errc::TooFewSamples:
    case Errc::NoValidTriplets:
    case Errc::NonFinite:
    case Errc::NotSymmetric:
    case Errc::ZeroVector:
      return kData;
    case Errc::DimensionTooLarge:
    case Errc::DimMismatch:
      return kShape;
    case Errc::EmptyGallery:
      return kGallery;
    case Errc::KOutOfRange:
      return kUsage;
    default:
      return kInput;
  }
}

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Binds options to variables and remembers them for the manifest. Empty
/// strings and unset booleans are omitted so a manifest replays to the
/// same command line.
class FlagSet {
 public:
  explicit FlagSet(CLI::App* app) : app_(app) {}

  template <typename T>
  CLI::Option* option(const std::string& name, T& var, const std::string& help) {
    getters_.emplace_back(name, [&var]() -> std::optional<json> {
      if constexpr (std::is_same_v<T, std::string>)
        if (var.empty()) return std::nullopt;
      return json(var);
    });
    return app_->add_option("--" + name, var, help)->capture_default_str();
  }

  CLI::Option* flag(const std::string& name, bool& var, const std::string& help) {
    getters_.emplace_back(name, [&var]() -> std::optional<json> {
      if (!var) return std::nullopt;
      return json(true);
    });
    return app_->add_flag("--" + name, var, help);
  }

  json to_json() const {
    json j = json::object();
    for (const auto& [name, get] : getters_)
      if (auto v = get()) j[name] = *v;
    return j;
  }

 private:
  CLI::App* app_;
  std::vector<std::pair<std::string, std::function<std::optional<json>()>>> getters_;
};

std::vector<fs::path> list_files(const std::string& dir, std::string_view ext) {
  if (!fs::is_directory(dir)) fail(Errc::Io, "not a directory: " + dir);
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ext) out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  return out;
}

std::string join(const fs::path& dir, const std::string& name) { return (dir / name).string(); }

std::map<std::string, std::string> parse_labels(std::string_view text, const std::string& origin) {
  std::map<std::string, std::string> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      fail(Errc::InvalidArgument, origin + ":" + std::to_string(lineno) + ": expected 'name<TAB>writer'");
    std::string name = line.substr(0, tab);
    std::string writer = line.substr(tab + 1);
    io::check_id(writer, "writer_id");
    out[name] = writer;
  }
  return out;
}

std::vector<DescriptorSet> load_desc_corpus(const std::string& dir, Manifest& m) {
  std::vector<DescriptorSet> out;
  for (const auto& f : list_files(dir, ".desc")) out.push_back(read_desc(m.read_input(f.string())));
  if (out.empty()) fail(Errc::Io, "no .desc files in " + dir);
  corpus_dim(out);
  return out;
}

std::vector<DescriptorSet> load_patch_corpus(const std::string& dir, std::uint64_t proj_seed,
                                             std::size_t dim, std::size_t threads, Manifest& m) {
  const auto labels = parse_labels(m.read_input(join(dir, "labels.tsv")), "labels.tsv");
  const auto files = list_files(dir, ".ptch");
  if (files.empty()) fail(Errc::Io, "no .ptch files in " + dir);
  std::vector<PatchSet> sets;
  for (const auto& f : files) {
    const std::string doc = f.stem().string();
    const auto it = labels.find(doc);
    if (it == labels.end()) fail(Errc::InvalidArgument, "no writer label for " + doc);
    sets.push_back({doc, it->second, read_ptch(m.read_input(f.string())), {}});
  }
  const Matrix proj = projection_matrix(proj_seed, dim);
  std::vector<DescriptorSet> out(sets.size());
  parallel_for(sets.size(), threads, [&](std::size_t i) { out[i] = project_patches(sets[i], proj); });
  return out;
}

std::string csv_history(const Vector& values, const char* column) {
  std::string out = std::string("epoch,") + column + "\n";
  char buf[64];
  for (std::size_t e = 0; e < values.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g\n", e + 1, values[e]);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------- synth

struct SynthOpts {
  SynthConfig cfg;
  std::string out;
};

int run_synth(const SynthOpts& o, Manifest& m) {
  fs::create_directories(o.out);
  for (const auto& set : synth_corpus(o.cfg)) m.write_output(join(o.out, set.doc_id + ".desc"), write_desc(set));
  m.save(join(o.out, "manifest.json"));
  return kOk;
}

// -------------------------------------------------------------- patches

struct PatchesOpts {
  std::string input;
  std::string labels;
  std::size_t stride = 3;
  std::size_t max_patches = 0;
  std::uint64_t seed = 0;
  bool invert = false;
  std::string out;
  std::size_t threads = default_threads();
};

int run_patches(const PatchesOpts& o, Manifest& m) {
  const auto pages = list_files(o.input, ".pgm");
  if (pages.empty()) {
    std::cerr << "wir patches: no input pages in " << o.input << "\n";
    return kInput;
  }
  const auto labels = parse_labels(m.read_input(o.labels), o.labels);
  std::vector<std::string> bytes;
  std::vector<std::string> writers;
  for (const auto& p : pages) {
    const auto it = labels.find(p.filename().string());
    if (it == labels.end()) fail(Errc::InvalidArgument, "no label for page " + p.filename().string());
    writers.push_back(it->second);
    bytes.push_back(m.read_input(p.string()));
  }

  const PatchOptions popt{o.stride, o.max_patches, o.invert};
  std::vector<std::optional<PatchSet>> sets(pages.size());
  std::vector<std::string> skipped(pages.size());
  parallel_for(pages.size(), o.threads, [&](std::size_t i) {
    SeededRng rng = SeededRng(o.seed).fork(i);
    try {
      sets[i] = extract_patches(load_pgm(bytes[i]), popt, rng, pages[i].stem().string(), writers[i]);
    } catch (const Error& e) {
      if (e.code() != Errc::NoContour) throw;
      skipped[i] = e.what();
    }
  });

  fs::create_directories(o.out);
  std::string label_out;
  json skipped_pages = json::array();
  for (std::size_t i = 0; i < pages.size(); ++i) {
    if (!sets[i]) {
      std::cerr << "wir patches: skipping " << pages[i].filename().string() << ": " << skipped[i] << "\n";
      skipped_pages.push_back(pages[i].filename().string());
      continue;
    }
    io::check_id(sets[i]->doc_id, "doc_id");
    m.write_output(join(o.out, sets[i]->doc_id + ".ptch"), write_ptch(*sets[i]));
    label_out += sets[i]->doc_id + "\t" + sets[i]->writer_id + "\n";
  }
  m.write_output(join(o.out, "labels.tsv"), label_out);
  if (!skipped_pages.empty()) m.note("skipped_pages", skipped_pages);
  m.save(join(o.out, "manifest.json"));
  return kOk;
}

// ------------------------------------------------------------- describe

struct DescribeOpts {
  std::string patches;
  std::uint64_t proj_seed = 0;
  std::size_t dim = kDefaultDescriptorDim;
  std::string out;
  std::size_t threads = default_threads();
};

int run_describe(const DescribeOpts& o, Manifest& m) {
  const auto corpus = load_patch_corpus(o.patches, o.proj_seed, o.dim, o.threads, m);
  fs::create_directories(o.out);
  for (const auto& set : corpus) m.write_output(join(o.out, set.doc_id + ".desc"), write_desc(set));
  m.save(join(o.out, "manifest.json"));
  return kOk;
}

// ---------------------------------------------------------------- train

struct TrainOpts {
  std::string desc;
  std::string patches;
  std::uint64_t proj_seed = 0;
  std::size_t dim = kDefaultDescriptorDim;
  std::size_t k = kDefaultClusters;
  std::string init = "random";
  double alpha = kDefaultAlphaInit;
  TrainConfig cfg;
  std::string out;
};

int run_train(TrainOpts o, Manifest& m) {
  if (o.desc.empty() == o.patches.empty()) throw UsageError("exactly one of --desc or --patches is required");
  if (o.init != "random" && o.init != "kmeans") throw UsageError("--init must be random or kmeans");
  const auto corpus = o.desc.empty()
                          ? load_patch_corpus(o.patches, o.proj_seed, o.dim, o.cfg.threads, m)
                          : load_desc_corpus(o.desc, m);
  const std::size_t d = corpus_dim(corpus);
  std::size_t total = 0;
  for (const auto& s : corpus) total += s.count();
  Matrix samples(total, d);
  std::size_t r = 0;
  for (const auto& s : corpus)
    for (std::size_t i = 0; i < s.count(); ++i, ++r)
      std::copy(s.descriptors.row(i).begin(), s.descriptors.row(i).end(), samples.row(r).begin());

  SeededRng init_rng = SeededRng(o.cfg.seed).fork(3);
  const auto init = init_params(samples, o.k, o.alpha, o.init == "kmeans" ? InitMode::KMeans : InitMode::Random,
                                init_rng);
  const auto result = train(corpus, init, o.cfg);

  const fs::path out(o.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  m.write_output(o.out, write_params(result.params));
  m.write_output(o.out + ".loss.csv", loss_csv(result.history));
  m.write_output(o.out + ".val.csv", csv_history(result.history.epoch_val_loss, "val_loss"));
  m.note("epoch_loss", result.history.epoch_loss);
  m.note("stopped_early", result.history.stopped_early);
  m.save(o.out + ".manifest.json");
  for (std::size_t e = 0; e < result.history.epoch_loss.size(); ++e)
    std::printf("epoch %zu  loss %.6f  val %.6f\n", e + 1, result.history.epoch_loss[e],
                result.history.epoch_val_loss[e]);
  return kOk;
}

// --------------------------------------------------------------- encode

struct EncodeOpts {
  std::string desc;
  std::string params;
  std::string pooling = "gmp";
  double lambda = kDefaultGmpLambda;
  double p = kDefaultPowerExponent;
  bool pca_fit = false;
  std::string pca_model;
  std::size_t dimension = kDefaultPcaDimension;
  bool no_whiten = false;
  std::string out;
  std::size_t threads = default_threads();
};

Pooling parse_pooling(const std::string& s) {
  if (s == "gmp") return Pooling::Gmp;
  if (s == "sum") return Pooling::Sum;
  throw UsageError("--pooling must be gmp or sum");
}

std::vector<GlobalDescriptor> encode_corpus(std::span<const DescriptorSet> corpus, const NetVladParams& params,
                                            const EncodeOptions& opt, std::size_t threads) {
  std::vector<GlobalDescriptor> out(corpus.size());
  parallel_for(corpus.size(), threads, [&](std::size_t i) { out[i] = encode_document(corpus[i], params, opt); });
  return out;
}

int run_encode(const EncodeOpts& o, Manifest& m) {
  if (o.pca_fit && !o.pca_model.empty()) throw UsageError("--pca-fit and --pca-model are exclusive");
  const EncodeOptions opt{parse_pooling(o.pooling), o.lambda, o.p};
  const auto params = read_params(m.read_input(o.params));
  const auto corpus = load_desc_corpus(o.desc, m);
  auto globals = encode_corpus(corpus, params, opt, o.threads);

  fs::create_directories(o.out);
  std::optional<PcaModel> pca;
  if (o.pca_fit) {
    const std::string bytes = write_pca(pca_fit(stack(globals), o.dimension, !o.no_whiten));
    m.write_output(join(o.out, "pca.pca1"), bytes);
    // apply the stored float32 model so --pca-model on this file reproduces the output
    pca = read_pca(bytes);
  } else if (!o.pca_model.empty()) {
    pca = read_pca(m.read_input(o.pca_model));
  }
  if (pca)
    for (auto& g : globals) g = pca_transform(*pca, g);
  for (const auto& g : globals) m.write_output(join(o.out, g.doc_id + ".gdsc"), write_global(g));
  m.save(join(o.out, "manifest.json"));
  return kOk;
}

// ------------------------------------------------------------- evaluate

struct EvaluateOpts {
  std::string globals;
  std::string rerank = std::to_string(kDefaultRerankK);
  std::string out;
  std::size_t threads = default_threads();
};

std::optional<std::size_t> parse_rerank(const std::string& s) {
  if (s == "none") return std::nullopt;
  std::size_t pos = 0;
  unsigned long k = 0;
  try {
    k = std::stoul(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != s.size() || k == 0) throw UsageError("--rerank must be a positive integer or 'none'");
  return k;
}

std::vector<RankedList> rank_gallery(const Gallery& gallery, std::optional<std::size_t> k, std::size_t threads) {
  return k ? rerank(gallery, *k, threads) : rank_all(gallery, threads);
}

std::vector<GlobalDescriptor> load_globals(const std::string& dir, Manifest& m) {
  std::vector<GlobalDescriptor> out;
  for (const auto& f : list_files(dir, ".gdsc"))
    for (auto& g : read_globals(m.read_input(f.string()))) out.push_back(std::move(g));
  return out;
}

int run_evaluate(const EvaluateOpts& o, Manifest& m) {
  const auto k = parse_rerank(o.rerank);
  const Gallery gallery(load_globals(o.globals, m));
  const auto lists = rank_gallery(gallery, k, o.threads);
  const auto report = evaluate(lists, gallery.writer_labels());

  fs::create_directories(o.out);
  m.write_output(join(o.out, "ranked.tsv"), ranked_tsv(lists));
  m.write_output(join(o.out, "report.tsv"), report_tsv(report));
  std::string ap;
  char buf[64];
  for (const auto& q : report.per_query) {
    std::snprintf(buf, sizeof buf, "\t%zu\t%.9g\n", q.relevant, q.average_precision);
    ap += q.query + buf;
  }
  m.write_output(join(o.out, "ap.tsv"), ap);
  m.write_output(join(o.out, "summary.txt"), report_summary(report));
  m.save(join(o.out, "manifest.json"));
  std::cout << report_summary(report);
  return kOk;
}

// ---------------------------------------------------------------- sweep

struct SweepOpts {
  std::string desc;
  std::string pca_desc;
  std::string params;
  std::string pooling = "gmp";
  double lambda = kDefaultGmpLambda;
  double p = kDefaultPowerExponent;
  std::vector<std::size_t> dims{32, 64, 128, 256};
  std::string rerank = "none";
  bool no_whiten = false;
  std::string out;
  std::size_t threads = default_threads();
};

int run_sweep(const SweepOpts& o, Manifest& m) {
  const auto k = parse_rerank(o.rerank);
  const EncodeOptions opt{parse_pooling(o.pooling), o.lambda, o.p};
  const auto params = read_params(m.read_input(o.params));
  const auto corpus = load_desc_corpus(o.desc, m);
  const auto globals = encode_corpus(corpus, params, opt, o.threads);
  const auto fit_globals =
      o.pca_desc.empty() ? globals : encode_corpus(load_desc_corpus(o.pca_desc, m), params, opt, o.threads);
  const Matrix fit_data = stack(fit_globals);

  std::string csv = "dimension,top1,hard2,hard3,map,status\n";
  char buf[160];
  for (auto dim : o.dims) {
    try {
      const auto pca = pca_fit(fit_data, dim, !o.no_whiten);
      std::vector<GlobalDescriptor> reduced;
      for (const auto& g : globals) reduced.push_back(pca_transform(pca, g));
      const Gallery gallery(std::move(reduced));
      const auto r = evaluate(rank_gallery(gallery, k, o.threads), gallery.writer_labels());
      std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g,ok\n", dim, r.top1, r.hard2, r.hard3, r.map);
    } catch (const Error& e) {
      if (e.code() != Errc::DimensionTooLarge) throw;
      std::snprintf(buf, sizeof buf, "%zu,,,,,skipped\n", dim);
    }
    csv += buf;
    std::cout << buf;
  }
  const fs::path out(o.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  m.write_output(o.out, csv);
  m.save(o.out + ".manifest.json");
  return kOk;
}

// --------------------------------------------------------------- replay

int run(const std::vector<std::string>& args);

int run_replay(const std::string& manifest_path) {
  const json j = json::parse(io::read_file(manifest_path));
  std::vector<std::string> args{"wir", j.at("subcommand").get<std::string>()};
  for (const auto& [name, value] : j.at("flags").items()) {
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back("--" + name);
      continue;
    }
    if (value.is_array()) {
      for (const auto& v : value) {
        args.push_back("--" + name);
        args.push_back(v.is_string() ? v.get<std::string>() : v.dump());
      }
      continue;
    }
    args.push_back("--" + name);
    args.push_back(value.is_string() ? value.get<std::string>() : value.dump());
  }
  const int code = run(args);
  if (code != kOk) return code;
  int mismatches = 0;
  for (const auto& out : j.at("outputs")) {
    const auto path = out.at("path").get<std::string>();
    const auto now = sha256_hex(io::read_file(path));
    if (now != out.at("sha256").get<std::string>()) {
      std::cerr << "replay: output differs: " << path << "\n";
      ++mismatches;
    }
  }
  if (mismatches) return kReplayMismatch;
  std::cout << "replay: " << j.at("outputs").size() << " outputs identical\n";
  return kOk;
}

// ------------------------------------------------------------- dispatch

int run(const std::vector<std::string>& args) {
  CLI::App app{"writer identification and retrieval pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  SynthOpts synth;
  auto* sy = app.add_subcommand("synth", "generate a synthetic descriptor corpus");
  FlagSet sy_flags(sy);
  sy_flags.option("writers", synth.cfg.writers, "number of writers");
  sy_flags.option("docs", synth.cfg.docs_per_writer, "documents per writer");
  sy_flags.option("descriptors", synth.cfg.descriptors_per_doc, "descriptors per document");
  sy_flags.option("dim", synth.cfg.dim, "descriptor dimension");
  sy_flags.option("separation", synth.cfg.separation, "distance between writer means in sigma units");
  sy_flags.option("sigma", synth.cfg.sigma, "per-coordinate noise standard deviation");
  sy_flags.option("seed", synth.cfg.seed, "random seed");
  sy_flags.option("out", synth.out, "output directory")->required();

  PatchesOpts patches;
  auto* pa = app.add_subcommand("patches", "extract contour-centred patches from PGM pages");
  FlagSet pa_flags(pa);
  pa_flags.option("input", patches.input, "directory of .pgm pages")->required();
  pa_flags.option("labels", patches.labels, "TSV 'filename<TAB>writer'")->required();
  pa_flags.option("stride", patches.stride, "take every n-th contour pixel")->check(CLI::PositiveNumber);
  pa_flags.option("max-patches", patches.max_patches, "per-page cap, 0 for none");
  pa_flags.option("seed", patches.seed, "subsampling seed");
  pa_flags.flag("invert", patches.invert, "treat light pixels as ink");
  pa_flags.option("out", patches.out, "output directory")->required();
  pa->add_option("--threads", patches.threads, "worker threads");

  DescribeOpts describe;
  auto* de = app.add_subcommand("describe", "project patches to local descriptors");
  FlagSet de_flags(de);
  de_flags.option("patches", describe.patches, "directory of .ptch files + labels.tsv")->required();
  de_flags.option("proj-seed", describe.proj_seed, "projection seed");
  de_flags.option("dim", describe.dim, "descriptor dimension");
  de_flags.option("out", describe.out, "output directory")->required();
  de->add_option("--threads", describe.threads, "worker threads");

  TrainOpts tr;
  tr.cfg.threads = default_threads();
  auto* trc = app.add_subcommand("train", "train NetVLAD parameters with semi-hard triplets");
  FlagSet tr_flags(trc);
  auto* desc_opt = tr_flags.option("desc", tr.desc, "directory of .desc files");
  auto* patch_opt = tr_flags.option("patches", tr.patches, "directory of .ptch files + labels.tsv");
  desc_opt->excludes(patch_opt);
  tr_flags.option("proj-seed", tr.proj_seed, "projection seed for --patches");
  tr_flags.option("dim", tr.dim, "descriptor dimension for --patches");
  tr_flags.option("k", tr.k, "number of clusters");
  tr_flags.option("margin", tr.cfg.margin, "triplet margin");
  tr_flags.option("lr", tr.cfg.lr, "Adamax learning rate");
  tr_flags.option("beta1", tr.cfg.beta1, "first-moment decay");
  tr_flags.option("beta2", tr.cfg.beta2, "infinity-norm decay");
  tr_flags.option("epochs", tr.cfg.epochs, "training epochs");
  tr_flags.option("batch-writers", tr.cfg.batch_writers, "writers per batch");
  tr_flags.option("batch-patches", tr.cfg.batch_patches, "descriptors per writer per batch");
  tr_flags.option("steps-per-epoch", tr.cfg.steps_per_epoch, "0: training descriptors / batch size");
  tr_flags.option("val-fraction", tr.cfg.val_fraction, "held-out fraction per writer");
  tr_flags.option("min-improvement", tr.cfg.min_improvement, "early stop threshold, 0 disables");
  tr_flags.option("init", tr.init, "random | kmeans");
  tr_flags.option("alpha", tr.alpha, "assignment sharpness for kmeans init");
  tr_flags.option("seed", tr.cfg.seed, "random seed");
  tr_flags.option("out", tr.out, "output NVLD1 file")->required();
  trc->add_option("--threads", tr.cfg.threads, "worker threads");

  EncodeOpts enc;
  auto* en = app.add_subcommand("encode", "encode documents into global descriptors");
  FlagSet en_flags(en);
  en_flags.option("desc", enc.desc, "directory of .desc files")->required();
  en_flags.option("params", enc.params, "NVLD1 parameter file")->required();
  en_flags.option("pooling", enc.pooling, "gmp | sum");
  en_flags.option("lambda", enc.lambda, "GMP ridge regularizer");
  en_flags.option("p", enc.p, "power-normalization exponent");
  auto* fit_opt = en_flags.flag("pca-fit", enc.pca_fit, "fit PCA on this corpus and write pca.pca1");
  auto* model_opt = en_flags.option("pca-model", enc.pca_model, "apply an existing PCA1 model");
  fit_opt->excludes(model_opt);
  en_flags.option("dimension", enc.dimension, "PCA components to keep");
  en_flags.flag("no-whiten", enc.no_whiten, "disable PCA whitening");
  en_flags.option("out", enc.out, "output directory")->required();
  en->add_option("--threads", enc.threads, "worker threads");

  EvaluateOpts ev;
  auto* evc = app.add_subcommand("evaluate", "rank, optionally re-rank, and score a gallery");
  FlagSet ev_flags(evc);
  ev_flags.option("globals", ev.globals, "directory of .gdsc files")->required();
  ev_flags.option("rerank", ev.rerank, "k for krNN query expansion, or none");
  ev_flags.option("out", ev.out, "output directory")->required();
  evc->add_option("--threads", ev.threads, "worker threads");

  SweepOpts sw;
  auto* swc = app.add_subcommand("sweep", "evaluate a range of PCA dimensions");
  FlagSet sw_flags(swc);
  sw_flags.option("desc", sw.desc, "directory of .desc files to evaluate")->required();
  sw_flags.option("pca-desc", sw.pca_desc, "directory of .desc files to fit PCA on (default: --desc)");
  sw_flags.option("params", sw.params, "NVLD1 parameter file")->required();
  sw_flags.option("pooling", sw.pooling, "gmp | sum");
  sw_flags.option("lambda", sw.lambda, "GMP ridge regularizer");
  sw_flags.option("p", sw.p, "power-normalization exponent");
  sw_flags.option("dims", sw.dims, "PCA dimensions")->delimiter(',');
  sw_flags.option("rerank", sw.rerank, "k for krNN query expansion, or none");
  sw_flags.flag("no-whiten", sw.no_whiten, "disable PCA whitening");
  sw_flags.option("out", sw.out, "output CSV")->required();
  swc->add_option("--threads", sw.threads, "worker threads");

  std::string replay_manifest;
  auto* rp = app.add_subcommand("replay", "re-run a manifest and verify output hashes");
  rp->add_option("--manifest", replay_manifest, "manifest.json to replay")->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  const auto* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  try {
    if (sub == rp) return run_replay(replay_manifest);
    if (sub == sy) {
      Manifest m(name, sy_flags.to_json());
      return run_synth(synth, m);
    }
    if (sub == pa) {
      Manifest m(name, pa_flags.to_json());
      return run_patches(patches, m);
    }
    if (sub == de) {
      Manifest m(name, de_flags.to_json());
      return run_describe(describe, m);
    }
    if (sub == trc) {
      Manifest m(name, tr_flags.to_json());
      return run_train(tr, m);
    }
    if (sub == en) {
      Manifest m(name, en_flags.to_json());
      return run_encode(enc, m);
    }
    if (sub == evc) {
      Manifest m(name, ev_flags.to_json());
      return run_evaluate(ev, m);
    }
    if (sub == swc) {
      Manifest m(name, sw_flags.to_json());
      return run_sweep(sw, m);
    }
  } catch (const UsageError& e) {
    std::cerr << "wir " << name << ": " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "wir " << name << ": " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "wir " << name << ": " << e.what() << "\n";
    return kInput;
  }
  return kUsage;
}

}  // namespace
}  // namespace wir::cli

int main(int argc, char** argv) {
  return wir::cli::run(std::vector<std::string>(argv, argv + argc));
}
