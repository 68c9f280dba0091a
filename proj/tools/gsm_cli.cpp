// gsm_cli: synthetic data generation, matching, registration, probability
// probes and benchmarks.
//
// Exit codes: 0 success (a pair that fails to register is still a success),
// 2 usage or input error, 3 internal error.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "gsm/gsm.hpp"

namespace fs = std::filesystem;
using namespace gsm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitInternal = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

bool is_input_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::FormatError:
    case ErrorCode::FileError:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::EmptyInput:
    case ErrorCode::InsufficientPoints:
    case ErrorCode::NormalsRequired:
    case ErrorCode::InvalidCount:
    case ErrorCode::InsufficientData:
    case ErrorCode::ConditionTooRare:
      return true;
    default:
      return false;
  }
}

void require_input(const std::string& path, const char* what) {
  std::error_code ec;
  if (path.empty()) throw UsageError(std::string(what) + " path is required");
  if (!fs::is_regular_file(path, ec)) throw UsageError(std::string(what) + " not found: " + path);
}

void require_output(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  std::error_code ec;
  if (!parent.empty() && !fs::is_directory(parent, ec))
    throw UsageError("output directory does not exist: " + parent.string());
}

void require_output_dir(const std::string& dir) {
  std::error_code ec;
  if (fs::exists(dir, ec) && !fs::is_directory(dir, ec)) throw UsageError("not a directory: " + dir);
  fs::create_directories(dir, ec);
  if (ec) throw UsageError("cannot create directory " + dir + ": " + ec.message());
}

bool has_ext(const std::string& path, const char* ext) { return fs::path(path).extension() == ext; }

// Parses "a..b" (inclusive integer range) or a comma-separated list.
std::vector<double> parse_sizes(const std::string& text) {
  std::vector<double> out;
  if (const auto dots = text.find(".."); dots != std::string::npos) {
    const int lo = std::stoi(text.substr(0, dots));
    const int hi = std::stoi(text.substr(dots + 2));
    if (lo < 1 || hi < lo) throw UsageError("bad size range: " + text);
    for (int v = lo; v <= hi; ++v) out.push_back(v);
    return out;
  }
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size() || !(v > 0.0)) throw UsageError("bad size: " + item);
    out.push_back(v);
  }
  if (out.empty()) throw UsageError("empty size list");
  return out;
}

std::vector<PolicyTag> parse_policies(const std::string& text) {
  std::vector<PolicyTag> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto p = parse_policy(item);
    if (!p || *p == PolicyTag::Unspecified) throw UsageError("unknown policy: " + item);
    out.push_back(*p);
  }
  if (out.empty()) throw UsageError("empty policy list");
  return out;
}

std::string provenance(const Json& config) { return "gsm config " + config.dump(); }

// ---------------------------------------------------------------- shared option groups

struct MatchFlags {
  std::string policy = "gs";
  std::size_t k_iter = 3;
  std::optional<double> t1;
  std::optional<std::size_t> t2;
  std::string weights = "inverse_count";
  double epsilon = 0.001;
  std::size_t sinkhorn_iters = 100;
  bool force = false;

  void add(CLI::App* app) {
    app->add_option("--policy", policy, "nn|mutual|hungarian|sinkhorn|gale-shapley|gs")->capture_default_str();
    app->add_option("--k-iter", k_iter, "GS-Matching candidate list length K")->capture_default_str();
    app->add_option("--t1", t1, "score threshold T1 (default: 0.9 quantile of the score matrix)");
    app->add_option("--t2", t2, "noise count limit T2 (default: max(10, 0.05 n))");
    app->add_option("--weights", weights, "inverse_count|reciprocal_rank")->capture_default_str();
    app->add_option("--epsilon", epsilon, "Sinkhorn entropy weight")->capture_default_str();
    app->add_option("--sinkhorn-iters", sinkhorn_iters, "Sinkhorn iteration cap")->capture_default_str();
    app->add_flag("--force", force, "allow Hungarian above 5000 points");
  }

  PolicyTag tag() const {
    const auto p = parse_policy(policy);
    if (!p || *p == PolicyTag::Unspecified) throw UsageError("unknown policy: " + policy);
    return *p;
  }

  MatchOptions options() const {
    MatchOptions o;
    o.gs.k_iterations = k_iter;
    o.gs.score_threshold_t1 = t1;
    o.gs.noise_count_max_t2 = t2;
    if (weights == "inverse_count") o.gs.weight_mode = WeightMode::InverseCount;
    else if (weights == "reciprocal_rank") o.gs.weight_mode = WeightMode::ReciprocalRank;
    else throw UsageError("unknown weight mode: " + weights);
    o.gs.validate();
    o.sinkhorn.epsilon = epsilon;
    o.sinkhorn.max_iters = sinkhorn_iters;
    return o;
  }

  void guard(std::size_t m, std::size_t n) const {
    if (tag() == PolicyTag::Hungarian && std::max(m, n) > 5000 && !force)
      throw UsageError("hungarian on more than 5000 points is O(n^3); pass --force to run it anyway");
  }

  Json json() const {
    return {{"policy", policy},   {"k_iter", k_iter},
            {"t1", t1 ? Json(*t1) : Json("auto")}, {"t2", t2 ? Json(*t2) : Json("auto")},
            {"weights", weights}, {"epsilon", epsilon},
            {"sinkhorn_iters", sinkhorn_iters}, {"force", force}};
  }
};

struct InputFlags {
  std::string src, tgt, src_desc, tgt_desc, gt;
  std::vector<double> src_viewpoint, tgt_viewpoint;
  std::size_t normal_k = 20;
  double radius = 0.3;
  double tau = InlierThreshold::kIndoor;

  void add(CLI::App* app) {
    app->add_option("--src", src, "source PLY")->required();
    app->add_option("--tgt", tgt, "target PLY")->required();
    app->add_option("--src-desc", src_desc, "source descriptor file (GSMD or .csv)");
    app->add_option("--tgt-desc", tgt_desc, "target descriptor file (GSMD or .csv)");
    app->add_option("--gt", gt, "ground truth JSON written by gen");
    app->add_option("--src-viewpoint", src_viewpoint, "sensor position for source normals")->expected(3);
    app->add_option("--tgt-viewpoint", tgt_viewpoint, "sensor position for target normals")->expected(3);
    app->add_option("--normal-k", normal_k, "neighbours for normal estimation")->capture_default_str();
    app->add_option("--radius", radius, "descriptor support radius (m)")->capture_default_str();
    app->add_option("--tau", tau, "inlier distance threshold (m)")->capture_default_str();
  }

  void validate() const {
    require_input(src, "source cloud");
    require_input(tgt, "target cloud");
    if (src_desc.empty() != tgt_desc.empty()) throw UsageError("--src-desc and --tgt-desc go together");
    if (!src_desc.empty()) {
      require_input(src_desc, "source descriptors");
      require_input(tgt_desc, "target descriptors");
    }
    if (!gt.empty()) require_input(gt, "ground truth");
    if (!(tau > 0.0)) throw UsageError("--tau must be positive");
    if (!(radius > 0.0)) throw UsageError("--radius must be positive");
  }

  Json json() const {
    return {{"src", src},           {"tgt", tgt},           {"src_desc", src_desc},
            {"tgt_desc", tgt_desc}, {"gt", gt},             {"normal_k", normal_k},
            {"radius", radius},     {"tau", tau}};
  }
};

struct LoadedInputs {
  PointCloud src, tgt;
  std::optional<DescriptorSet> src_desc, tgt_desc;
  std::optional<GroundTruth> gt;
  PipelineConfig config;
};

LoadedInputs load_inputs(const InputFlags& in) {
  LoadedInputs out;
  out.src = read_ply(in.src);
  out.tgt = read_ply(in.tgt);
  if (!in.src_desc.empty()) {
    out.src_desc = load_descriptors(in.src_desc);
    out.tgt_desc = load_descriptors(in.tgt_desc);
  }
  if (!in.gt.empty()) out.gt = ground_truth_from_json(load_json(in.gt), in.gt);
  out.config.normal_k = in.normal_k;
  out.config.descriptor.radius = in.radius;
  out.config.ransac.inlier_tau = in.tau;
  out.config.spectral.inlier_tau = in.tau;
  if (out.gt) {
    out.config.src_viewpoint = out.gt->src_viewpoint;
    out.config.tgt_viewpoint = out.gt->tgt_viewpoint;
  }
  if (!in.src_viewpoint.empty()) out.config.src_viewpoint = Vec3(in.src_viewpoint[0], in.src_viewpoint[1], in.src_viewpoint[2]);
  if (!in.tgt_viewpoint.empty()) out.config.tgt_viewpoint = Vec3(in.tgt_viewpoint[0], in.tgt_viewpoint[1], in.tgt_viewpoint[2]);
  return out;
}

// Normals + descriptors + similarity, or the supplied descriptors.
PipelineResult prepare(const LoadedInputs& in) {
  PipelineResult r;
  if (in.src_desc) {
    r.src = in.src;
    r.tgt = in.tgt;
    r.src_descriptors = *in.src_desc;
    r.tgt_descriptors = *in.tgt_desc;
    if (r.src_descriptors.size() != r.src.size() || r.tgt_descriptors.size() != r.tgt.size())
      throw Error(ErrorCode::DimensionMismatch, "descriptor count does not match cloud size");
    return r;
  }
  r.src = in.src.has_normals() ? in.src : estimate_normals(in.src, in.config.normal_k, in.config.src_viewpoint);
  r.tgt = in.tgt.has_normals() ? in.tgt : estimate_normals(in.tgt, in.config.normal_k, in.config.tgt_viewpoint);
  r.src_descriptors = compute_descriptors(r.src, in.config.descriptor);
  r.tgt_descriptors = compute_descriptors(r.tgt, in.config.descriptor);
  return r;
}

// ---------------------------------------------------------------- gen

struct GenFlags {
  std::string shape = "multi_plane";
  std::string mesh;
  std::size_t n = 1000;
  double overlap = 0.5;
  double noise = 0.0;
  double rot_max_deg = 180.0;
  double trans_max = 1.0;
  std::uint64_t seed = 0;
  std::string out = ".";
  bool ascii = false;
};

int cmd_gen(const GenFlags& f) {
  SyntheticPairSpec spec;
  const auto shape = parse_shape(f.shape);
  if (!shape) throw UsageError("unknown shape: " + f.shape);
  spec.shape = *shape;
  spec.mesh_path = f.mesh;
  spec.n_points = f.n;
  spec.overlap_fraction = f.overlap;
  spec.noise_sigma = f.noise;
  spec.rotation_max = deg_to_rad(f.rot_max_deg);
  spec.translation_max = f.trans_max;
  spec.seed = f.seed;
  spec.validate();
  if (spec.shape == SyntheticShape::MeshFile) require_input(f.mesh, "mesh");
  require_output_dir(f.out);

  const Json config = {{"command", "gen"},       {"shape", f.shape},     {"mesh", f.mesh},
                       {"n", f.n},               {"overlap", f.overlap}, {"noise", f.noise},
                       {"rot_max_deg", f.rot_max_deg}, {"trans_max", f.trans_max},
                       {"seed", f.seed},         {"format", f.ascii ? "ascii" : "binary"}};
  const SyntheticPair pair = generate_pair(spec);
  const auto format = f.ascii ? PlyFormat::Ascii : PlyFormat::BinaryLittleEndian;
  const fs::path dir(f.out);
  write_ply((dir / "src.ply").string(), pair.src, format, {provenance(config)});
  write_ply((dir / "tgt.ply").string(), pair.tgt, format, {provenance(config)});
  GroundTruth gt{pair.xf_gt, pair.overlap_mask, pair.src_viewpoint, pair.tgt_viewpoint};
  save_json((dir / "gt.json").string(), ground_truth_to_json(gt, config));
  std::printf("wrote %s/{src.ply,tgt.ply,gt.json}: %zu points each, %zu overlapping\n", f.out.c_str(),
              pair.src.size(), pair.overlap_count());
  return kExitOk;
}

// ---------------------------------------------------------------- match

int cmd_match(const InputFlags& in, const MatchFlags& mf, const std::string& out) {
  in.validate();
  const auto policy = mf.tag();
  const auto opts = mf.options();
  if (!out.empty()) require_output(out);
  const LoadedInputs inputs = load_inputs(in);
  mf.guard(inputs.src.size(), inputs.tgt.size());

  PipelineResult r = prepare(inputs);
  const auto s = cosine_similarity_matrix(r.src_descriptors, r.tgt_descriptors);
  const CorrespondenceSet corr = match(s, policy, opts);

  Json config = {{"command", "match"}, {"input", in.json()}, {"match", mf.json()}};
  if (!out.empty()) {
    if (has_ext(out, ".csv")) atomic_write(out, correspondences_to_csv(corr, provenance(config)));
    else save_json(out, correspondences_to_json(corr, config));
  }
  std::printf("policy %s: %zu pairs (%zu one-to-one), %zu sources pruned\n", std::string(to_string(policy)).c_str(),
              corr.size(), corr.stable_count, corr.pruned_src.size());
  if (inputs.gt) {
    const double ir = inlier_ratio(corr, r.src, r.tgt, inputs.gt->xf, in.tau);
    const auto nir = non_repetitive_inlier_ratio(corr, r.src, r.tgt, inputs.gt->xf, in.tau);
    std::printf("IR %.4f  NIR %.4f%s\n", ir, nir.value, nir.defined ? "" : " (undefined: no pairs)");
  }
  return kExitOk;
}

// ---------------------------------------------------------------- register

struct RegisterFlags {
  std::string rejector = "ransac";
  std::size_t ransac_iters = 50000;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_register(const InputFlags& in, const MatchFlags& mf, const RegisterFlags& rf) {
  in.validate();
  const auto policy = mf.tag();
  if (!rf.out.empty()) require_output(rf.out);
  if (rf.rejector != "ransac" && rf.rejector != "sm") throw UsageError("unknown rejector: " + rf.rejector);
  LoadedInputs inputs = load_inputs(in);
  mf.guard(inputs.src.size(), inputs.tgt.size());
  PipelineConfig& pc = inputs.config;
  pc.policy = policy;
  pc.match = mf.options();
  pc.rejector = rf.rejector == "ransac" ? Rejector::Ransac : Rejector::SpectralMatching;
  pc.ransac.max_iterations = rf.ransac_iters;
  pc.ransac.seed = rf.seed;
  pc.ransac.validate();

  PipelineResult r = prepare(inputs);
  bool success = true;
  std::string failure;
  try {
    run_matching_and_rejection(r, pc);
    success = !r.low_confidence;
    if (!success) failure = "too few inliers support the estimate";
  } catch (const Error& e) {
    if (e.code() != ErrorCode::InsufficientCorrespondences && e.code() != ErrorCode::DegenerateInput) throw;
    success = false;
    failure = e.what();
    r.registration = {};
  }

  const Json config = {{"command", "register"},
                       {"input", in.json()},
                       {"match", mf.json()},
                       {"rejector", rf.rejector},
                       {"ransac_iters", rf.ransac_iters},
                       {"seed", rf.seed}};
  Json result = registration_to_json(r, success, config);
  if (!failure.empty()) result["failure"] = failure;
  if (inputs.gt) {
    const double re = rad_to_deg(rotation_error(r.registration.transform.rotation, inputs.gt->xf.rotation));
    const double te = 100.0 * translation_error(r.registration.transform.translation, inputs.gt->xf.translation);
    result["re_deg"] = re;
    result["te_cm"] = te;
    std::printf("RE %.4f deg  TE %.4f cm\n", re, te);
  }
  if (!rf.out.empty()) save_json(rf.out, result);
  std::printf("success %s, %zu correspondences, %zu inliers\n", success ? "true" : "false",
              r.correspondences.size(), r.registration.predicted_inliers.size());
  if (!failure.empty()) std::printf("registration failed: %s\n", failure.c_str());
  return kExitOk;
}

// ---------------------------------------------------------------- probe

struct ProbeFlags {
  double mu1 = 0.8, sigma1 = 0.1, mu2 = 0.3, sigma2 = 0.2;
  bool truncated = false;
  std::size_t m = 10;
  std::string sizes = "1..50";
  bool mc_check = false;
  std::size_t mc_samples = kDefaultMonteCarloSamples;
  std::uint64_t seed = 1;
  std::string out;
};

int cmd_probe(const ProbeFlags& f) {
  ScoreModel model{f.mu1, f.sigma1, f.mu2, f.sigma2, f.truncated};
  model.validate();
  if (f.m == 0) throw UsageError("--m must be >= 1");
  if (f.mc_samples == 0) throw UsageError("--mc-samples must be >= 1");
  const auto sizes = parse_sizes(f.sizes);
  if (!f.out.empty()) require_output(f.out);

  auto rows = selection_probability_curve(model, f.m, sizes);
  if (f.mc_check) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      rows[i].monte_carlo = prob_inlier_selected_mc(model, {f.m, rows[i].n}, f.mc_samples, f.seed + i).probability;
    }
  }
  const Json config = {{"command", "probe"}, {"mu1", f.mu1},       {"sigma1", f.sigma1},
                       {"mu2", f.mu2},       {"sigma2", f.sigma2}, {"truncated", f.truncated},
                       {"m", f.m},           {"sizes", f.sizes},   {"mc_check", f.mc_check},
                       {"mc_samples", f.mc_samples}, {"seed", f.seed}};
  const std::string csv = curve_to_csv(rows, provenance(config));
  if (f.out.empty()) std::fputs(csv.c_str(), stdout);
  else if (has_ext(f.out, ".json")) save_json(f.out, curve_to_json(rows, config));
  else atomic_write(f.out, csv);
  if (f.mc_check) {
    double worst = 0.0;
    for (const auto& r : rows) worst = std::max(worst, std::abs(r.probability - *r.monte_carlo));
    std::fprintf(stderr, "max |quadrature - monte carlo| = %.5f\n", worst);
  }
  return kExitOk;
}

// ---------------------------------------------------------------- bench / timing

struct BenchFlags {
  std::size_t pairs = 50;
  std::size_t n = 1000;
  double overlap = 0.3;
  double noise = 0.01;
  std::string shape = "multi_plane";
  std::string mesh;
  std::string policies = "nn,mutual,hungarian,sinkhorn,gale-shapley,gs";
  std::string rejector = "ransac";
  std::uint64_t seed = 1;
  double radius = 0.3;
  std::string out = "bench_out";
};

int cmd_bench(const BenchFlags& f, const MatchFlags& mf) {
  const auto policies = parse_policies(f.policies);
  const auto shape = parse_shape(f.shape);
  if (!shape) throw UsageError("unknown shape: " + f.shape);
  if (f.rejector != "ransac" && f.rejector != "sm") throw UsageError("unknown rejector: " + f.rejector);
  if (f.pairs == 0) throw UsageError("--pairs must be >= 1");
  SyntheticPairSpec proto;
  proto.n_points = f.n;
  proto.overlap_fraction = f.overlap;
  proto.noise_sigma = f.noise;
  proto.shape = *shape;
  proto.mesh_path = f.mesh;
  proto.validate();
  if (proto.shape == SyntheticShape::MeshFile) require_input(f.mesh, "mesh");
  if (std::count(policies.begin(), policies.end(), PolicyTag::Hungarian) > 0 && f.n > 5000 && !mf.force)
    throw UsageError("hungarian on more than 5000 points is O(n^3); pass --force to run it anyway");
  require_output_dir(f.out);

  EvalConfig cfg;
  cfg.pipeline.descriptor.radius = f.radius;
  cfg.pipeline.match = mf.options();
  const auto specs = make_suite(proto, f.pairs, f.seed);
  const auto reports = policy_comparison(specs, std::span<const PolicyTag>(policies),
                                         f.rejector == "ransac" ? Rejector::Ransac : Rejector::SpectralMatching, cfg);

  const Json config = {{"command", "bench"}, {"pairs", f.pairs},       {"n", f.n},
                       {"overlap", f.overlap}, {"noise", f.noise},     {"shape", f.shape},
                       {"mesh", f.mesh},       {"policies", f.policies}, {"rejector", f.rejector},
                       {"seed", f.seed},       {"radius", f.radius},   {"match", mf.json()},
                       {"recall_re_deg", cfg.recall.re_deg}, {"recall_te_cm", cfg.recall.te_cm},
                       {"ir_tau", cfg.ir_tau}};
  const fs::path dir(f.out);
  atomic_write((dir / "bench_pairs.csv").string(), records_to_csv(reports, provenance(config)));
  save_json((dir / "bench_report.json").string(), reports_to_json(reports, config));
  std::printf("%-14s %8s %8s %8s %10s %10s\n", "policy", "RR(%)", "IR", "NIR", "corr", "match_ms");
  for (const auto& r : reports) {
    const auto& a = r.aggregate;
    std::printf("%-14s %8.1f %8.4f %8.4f %10.1f %10.2f\n", r.label.c_str(), a.rr_percent, a.mean_ir, a.mean_nir,
                a.mean_corr_count, a.median_matching_ms);
  }
  return kExitOk;
}

struct TimingFlags {
  std::string policies = "nn,mutual,hungarian,sinkhorn,gale-shapley,gs";
  std::string sizes = "1000,2000,4000";
  std::size_t repeats = 3;
  std::uint64_t seed = 0;
  bool include_large_hungarian = false;
  std::string out = "timing.csv";
};

int cmd_timing(const TimingFlags& f, const MatchFlags& mf) {
  const auto policies = parse_policies(f.policies);
  std::vector<std::size_t> sizes;
  for (double v : parse_sizes(f.sizes)) {
    if (v != std::floor(v)) throw UsageError("timing sizes must be integers");
    sizes.push_back(static_cast<std::size_t>(v));
  }
  if (f.repeats == 0) throw UsageError("--repeats must be >= 1");
  require_output(f.out);
  TimingOptions opts;
  opts.repeats = f.repeats;
  opts.seed = f.seed;
  opts.include_large_hungarian = f.include_large_hungarian;
  opts.match = mf.options();
  const auto rows = timing_study(policies, sizes, opts);
  const Json config = {{"command", "timing"}, {"policies", f.policies}, {"sizes", f.sizes},
                       {"repeats", f.repeats}, {"seed", f.seed},
                       {"include_large_hungarian", f.include_large_hungarian}, {"match", mf.json()}};
  atomic_write(f.out, timing_to_csv(rows, provenance(config)));

  std::printf("%-14s %8s %12s %8s\n", "policy", "n", "median_ms", "ratio");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.skipped) {
      std::printf("%-14s %8zu %12s %8s\n", std::string(to_string(r.policy)).c_str(), r.n, "skipped", "-");
      continue;
    }
    // Ratio against the same policy at the previous size.
    std::string ratio = "-";
    for (std::size_t j = i; j-- > 0;) {
      if (rows[j].policy == r.policy) {
        if (!rows[j].skipped && rows[j].median_ms > 0.0) ratio = std::to_string(r.median_ms / rows[j].median_ms).substr(0, 5);
        break;
      }
    }
    std::printf("%-14s %8zu %12.3f %8s\n", std::string(to_string(r.policy)).c_str(), r.n, r.median_ms, ratio.c_str());
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Point cloud correspondence matching and registration"};
  app.require_subcommand(1);

  GenFlags gen;
  auto* gen_cmd = app.add_subcommand("gen", "write a synthetic pair: src.ply, tgt.ply, gt.json");
  gen_cmd->add_option("--shape", gen.shape, "box|sphere|multi_plane|mesh")->capture_default_str();
  gen_cmd->add_option("--mesh", gen.mesh, "PLY whose vertices are sampled when --shape mesh");
  gen_cmd->add_option("--n", gen.n, "points per cloud")->capture_default_str();
  gen_cmd->add_option("--overlap", gen.overlap, "overlap fraction in (0, 1]")->capture_default_str();
  gen_cmd->add_option("--noise", gen.noise, "Gaussian noise sigma (m) on the target")->capture_default_str();
  gen_cmd->add_option("--rot-max", gen.rot_max_deg, "max rotation angle (deg)")->capture_default_str();
  gen_cmd->add_option("--trans-max", gen.trans_max, "max translation (m)")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed)->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "output directory")->capture_default_str();
  gen_cmd->add_flag("--ascii", gen.ascii, "write ASCII PLY instead of binary");

  InputFlags match_in;
  MatchFlags match_flags;
  std::string match_out;
  auto* match_cmd = app.add_subcommand("match", "compute correspondences with a matching policy");
  match_in.add(match_cmd);
  match_flags.add(match_cmd);
  match_cmd->add_option("--out", match_out, "output file (.json or .csv)");

  InputFlags reg_in;
  MatchFlags reg_match;
  RegisterFlags reg;
  auto* reg_cmd = app.add_subcommand("register", "estimate the rigid transform between two clouds");
  reg_in.add(reg_cmd);
  reg_match.add(reg_cmd);
  reg_cmd->add_option("--rejector", reg.rejector, "ransac|sm")->capture_default_str();
  reg_cmd->add_option("--ransac-iters", reg.ransac_iters)->capture_default_str();
  reg_cmd->add_option("--seed", reg.seed)->capture_default_str();
  reg_cmd->add_option("--out", reg.out, "result JSON");

  ProbeFlags probe;
  auto* probe_cmd = app.add_subcommand("probe", "probability that the best-scoring candidate is an inlier");
  probe_cmd->add_option("--mu1", probe.mu1, "inlier score mean")->capture_default_str();
  probe_cmd->add_option("--sigma1", probe.sigma1, "inlier score stddev")->capture_default_str();
  probe_cmd->add_option("--mu2", probe.mu2, "outlier score mean")->capture_default_str();
  probe_cmd->add_option("--sigma2", probe.sigma2, "outlier score stddev")->capture_default_str();
  probe_cmd->add_flag("--truncated", probe.truncated, "truncate both Gaussians to [-1, 1]");
  probe_cmd->add_option("--m", probe.m, "number of inlier candidates")->capture_default_str();
  probe_cmd->add_option("--sizes", probe.sizes, "size multipliers: a..b or a,b,c (n = size * m)")->capture_default_str();
  probe_cmd->add_flag("--mc-check", probe.mc_check, "append a Monte Carlo column");
  probe_cmd->add_option("--mc-samples", probe.mc_samples)->capture_default_str();
  probe_cmd->add_option("--seed", probe.seed)->capture_default_str();
  probe_cmd->add_option("--out", probe.out, "curve file (.csv or .json); stdout when omitted");

  BenchFlags bench;
  MatchFlags bench_match;
  auto* bench_cmd = app.add_subcommand("bench", "compare matching policies on seeded synthetic pairs");
  bench_cmd->add_option("--pairs", bench.pairs)->capture_default_str();
  bench_cmd->add_option("--n", bench.n, "points per cloud")->capture_default_str();
  bench_cmd->add_option("--overlap", bench.overlap)->capture_default_str();
  bench_cmd->add_option("--noise", bench.noise)->capture_default_str();
  bench_cmd->add_option("--shape", bench.shape)->capture_default_str();
  bench_cmd->add_option("--mesh", bench.mesh);
  bench_cmd->add_option("--policies", bench.policies, "comma-separated policy list")->capture_default_str();
  bench_cmd->add_option("--rejector", bench.rejector, "ransac|sm")->capture_default_str();
  bench_cmd->add_option("--seed", bench.seed, "seed of the first pair")->capture_default_str();
  bench_cmd->add_option("--radius", bench.radius, "descriptor support radius (m)")->capture_default_str();
  bench_cmd->add_option("--out", bench.out, "output directory")->capture_default_str();
  bench_cmd->add_option("--k-iter", bench_match.k_iter)->capture_default_str();
  bench_cmd->add_option("--t1", bench_match.t1);
  bench_cmd->add_option("--t2", bench_match.t2);
  bench_cmd->add_option("--weights", bench_match.weights)->capture_default_str();
  bench_cmd->add_option("--epsilon", bench_match.epsilon)->capture_default_str();
  bench_cmd->add_flag("--force", bench_match.force, "allow Hungarian above 5000 points");

  TimingFlags timing;
  MatchFlags timing_match;
  auto* timing_cmd = app.add_subcommand("timing", "median matching time per policy and size");
  timing_cmd->add_option("--policies", timing.policies)->capture_default_str();
  timing_cmd->add_option("--sizes", timing.sizes)->capture_default_str();
  timing_cmd->add_option("--repeats", timing.repeats)->capture_default_str();
  timing_cmd->add_option("--seed", timing.seed)->capture_default_str();
  timing_cmd->add_flag("--include-large-hungarian", timing.include_large_hungarian,
                       "time Hungarian above n = 2000 as well");
  timing_cmd->add_option("--out", timing.out, "CSV output")->capture_default_str();
  timing_cmd->add_option("--k-iter", timing_match.k_iter)->capture_default_str();
  timing_cmd->add_option("--epsilon", timing_match.epsilon)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen(gen);
    if (*match_cmd) return cmd_match(match_in, match_flags, match_out);
    if (*reg_cmd) return cmd_register(reg_in, reg_match, reg);
    if (*probe_cmd) return cmd_probe(probe);
    if (*bench_cmd) return cmd_bench(bench, bench_match);
    if (*timing_cmd) return cmd_timing(timing, timing_match);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "error: %s (byte offset %zu)\n", e.what(), e.offset());
    return kExitUsage;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return is_input_error(e.code()) ? kExitUsage : kExitInternal;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: invalid number: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return kExitInternal;
  }
  return kExitUsage;
}
