#include "owtk/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <optional>

#include "owtk/detset.hpp"
#include "owtk/eval.hpp"
#include "owtk/filters.hpp"
#include "owtk/sim.hpp"
#include "owtk/tracker.hpp"

namespace owtk {

namespace {

struct FilterArgs {
  std::string policy = "topk";
  int k = 15;
  double tau = 0.5;
  std::optional<double> nms_iou;
  bool class_agnostic = false;
  std::string gt;
  std::string input;
  std::string output;
};

struct TrackArgs {
  std::string policy = "none";
  int k = 15;
  double tau = 0.5;
  TrackerConfig config;
  int jobs = 1;
  std::string gt;
  std::string input;
  std::string output;
};

struct EvalArgs {
  std::string gt;
  std::string pred;
  int max_dets = 100;
  std::string iou_type = "box";
  std::string mode = "frame";
  bool per_class = false;
  std::string label = "result";
  bool csv = false;
  bool id_switches = false;
  std::string out_json;
  int jobs = 1;
};

struct SimArgs {
  SequenceSpec spec;
  std::string gt_out;
  std::string det_out;
};

struct ReportArgs {
  bool csv = false;
  std::vector<std::string> inputs;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void require_path(const std::string& value, const char* what) {
  if (value.empty()) throw UsageError(std::string("missing required ") + what);
}

// Resolved configuration of one subcommand in the config-file format.
std::string dump_config(const CLI::App& sub) {
  std::string text = "[" + sub.get_name() + "]\n";
  for (const CLI::Option* opt : sub.get_options()) {
    if (!opt->get_configurable() || opt->get_single_name() == "print-config") continue;
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help") continue;
    std::string value;
    if (opt->count() > 0) {
      const auto results = opt->reduced_results();
      for (std::size_t i = 0; i < results.size(); ++i) value += (i ? " " : "") + results[i];
      if (opt->get_expected_min() == 0 && value.empty()) value = "true";
    } else {
      value = opt->get_default_str();
      if (value.empty() && opt->get_expected_min() == 0) value = "false";
    }
    if (value.empty()) continue;
    const bool numeric = value.find_first_not_of("0123456789.-+eE") == std::string::npos;
    const bool boolean = value == "true" || value == "false";
    text += name + " = " + (numeric || boolean ? value : "\"" + value + "\"") + "\n";
  }
  return text;
}

std::optional<FilterPolicy> make_policy(const std::string& kind, int k, double tau) {
  if (kind == "none") return std::nullopt;
  if (kind == "topk") return FilterPolicy::topk(k);
  return FilterPolicy::threshold(tau);
}

std::optional<ImageTable> reference_table(const std::string& gt_path) {
  if (gt_path.empty()) return std::nullopt;
  return load_annotations(gt_path).table;
}

int run_filter(const FilterArgs& a, std::ostream&) {
  require_path(a.input, "input path");
  require_path(a.output, "output path");
  const std::optional<FilterPolicy> policy = make_policy(a.policy, a.k, a.tau);
  const std::optional<ImageTable> ref = reference_table(a.gt);
  DetectionSet set = load_results(a.input, ref ? &*ref : nullptr);
  if (a.class_agnostic) set = class_agnostic_merge(std::move(set));
  for (auto& [image_id, dets] : set.by_image) {
    std::vector<Detection> kept = dets;
    if (a.nms_iou) kept = nms(kept, *a.nms_iou);
    if (policy) kept = pseudo_label(kept, *policy);
    dets = std::move(kept);
  }
  std::erase_if(set.by_image, [](const auto& entry) { return entry.second.empty(); });
  save_results(set, a.output);
  return kExitOk;
}

int run_track(TrackArgs a, std::ostream&) {
  require_path(a.input, "input path");
  require_path(a.output, "output path");
  a.config.policy = make_policy(a.policy, a.k, a.tau);
  const std::optional<ImageTable> ref = reference_table(a.gt);
  const DetectionSet set = load_results(a.input, ref ? &*ref : nullptr);
  save_results(track_all(a.config, set, a.jobs), a.output);
  return kExitOk;
}

int run_eval(const EvalArgs& a, std::ostream& out) {
  require_path(a.gt, "--gt");
  require_path(a.pred, "--pred");
  const GroundTruth gt = load_annotations(a.gt);
  const DetectionSet pred = load_results(a.pred, &gt.table);
  EvalConfig cfg;
  cfg.max_dets = a.max_dets;
  cfg.iou_kind = a.iou_type == "mask" ? IouKind::kMask : IouKind::kBox;
  cfg.class_agnostic = !a.per_class;
  const EvalResult result = a.mode == "video" ? track_ar(pred, gt, cfg, a.jobs)
                                              : ar_at_k(pred, gt, cfg, a.jobs);
  const std::vector<ReportRow> rows{{a.label, result}};
  out << report(rows, a.csv ? ReportFormat::kCsv : ReportFormat::kText);
  if (a.id_switches) out << "id_switches " << count_id_switches(pred, gt) << '\n';
  if (!a.out_json.empty()) {
    std::ofstream f(a.out_json, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + a.out_json);
    f << result_to_json(a.label, result).dump(1) << '\n';
  }
  return kExitOk;
}

int run_simulate(const SimArgs& a, std::ostream&) {
  require_path(a.gt_out, "--gt-out");
  require_path(a.det_out, "--det-out");
  const SimOutput sim = simulate(a.spec);
  save_annotations(sim.gt, a.gt_out);
  save_results(sim.detections, a.det_out);
  return kExitOk;
}

int run_report(const ReportArgs& a, std::ostream& out) {
  std::vector<ReportRow> rows;
  for (const std::string& path : a.inputs) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path);
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(path + ": malformed JSON: " + e.what());
    }
    rows.push_back(result_from_json(doc));
  }
  out << report(rows, a.csv ? ReportFormat::kCsv : ReportFormat::kText);
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tracking-by-detection and class-agnostic recall toolkit", "owtk"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read option defaults from a config file ([subcommand] sections)");
  bool print_config = false;

  FilterArgs fa;
  auto* filter = app.add_subcommand("filter", "Filter per-image detections (NMS, then top-k or threshold)");
  filter->option_defaults()->always_capture_default();
  filter->fallthrough();
  filter->add_option("--policy", fa.policy, "Filter policy")->check(CLI::IsMember({"topk", "threshold", "none"}));
  filter->add_option("--k", fa.k, "Detections kept per image by topk")->check(CLI::PositiveNumber);
  filter->add_option("--tau", fa.tau, "Score threshold of the threshold policy")->check(CLI::Range(0.0, 1.0));
  filter->add_option("--nms-iou", fa.nms_iou, "Apply hard NMS at this IoU first (off when unset)")
      ->check(CLI::Range(0.0, 1.0));
  filter->add_flag("--class-agnostic", fa.class_agnostic, "Rewrite every category_id to 1");
  filter->add_option("--gt", fa.gt, "Annotation file supplying the image table for bare result arrays");
  filter->add_option("input", fa.input, "Input results file")->configurable(false);
  filter->add_option("output", fa.output, "Output results file")->configurable(false);
  filter->add_flag("--print-config", print_config, "Print the resolved configuration and exit");

  TrackArgs ta;
  auto* track = app.add_subcommand("track", "Track detections of every video");
  track->option_defaults()->always_capture_default();
  track->fallthrough();
  TrackerConfig& tc = ta.config;
  track->add_option("--score-thresh", tc.score_thresh, "Drop detections scoring below this")
      ->check(CLI::Range(0.0, 1.0));
  track->add_option("--nms-iou", tc.nms_iou, "NMS IoU threshold before association")->check(CLI::Range(0.0, 1.0));
  track->add_option("--policy", ta.policy, "Extra pre-association filter")
      ->check(CLI::IsMember({"none", "topk", "threshold"}));
  track->add_option("--k", ta.k, "k of the topk pre-filter")->check(CLI::PositiveNumber);
  track->add_option("--tau", ta.tau, "tau of the threshold pre-filter")->check(CLI::Range(0.0, 1.0));
  track->add_option("--n-init", tc.n_init, "Consecutive matches before a track is confirmed")
      ->check(CLI::PositiveNumber);
  track->add_option("--max-age", tc.max_age, "Frames a confirmed track may go unmatched")->check(CLI::PositiveNumber);
  track->add_option("--gallery-budget", tc.gallery_budget, "Embeddings kept per track")->check(CLI::PositiveNumber);
  track->add_option("--lambda", tc.assoc.lambda, "Weight of motion cost against appearance cost")
      ->check(CLI::Range(0.0, 1.0));
  track->add_option("--gate-chi2", tc.assoc.gate_chi2, "Mahalanobis gate (squared distance)")
      ->check(CLI::PositiveNumber);
  track->add_option("--max-appearance", tc.assoc.max_appearance, "Largest admissible cosine distance");
  track->add_option("--max-iou-cost", tc.assoc.max_iou_cost, "Largest admissible 1 - IoU");
  track->add_option("--std-weight-position", tc.kalman.std_weight_position, "Position noise per unit height");
  track->add_option("--std-weight-velocity", tc.kalman.std_weight_velocity, "Velocity noise per unit height");
  track->add_option("--jobs", ta.jobs, "Videos tracked in parallel")->check(CLI::PositiveNumber);
  track->add_option("--gt", ta.gt, "Annotation file supplying image/video tables for bare result arrays");
  track->add_option("input", ta.input, "Input results file")->configurable(false);
  track->add_option("output", ta.output, "Output results file with track_id")->configurable(false);
  track->add_flag("--print-config", print_config, "Print the resolved configuration and exit");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Class-agnostic AR@K of frame detections or video tracks");
  eval->option_defaults()->always_capture_default();
  eval->fallthrough();
  eval->add_option("--gt", ea.gt, "Ground-truth annotation file");
  eval->add_option("--pred", ea.pred, "Results file");
  eval->add_option("--max-dets", ea.max_dets, "K of AR@K")->check(CLI::PositiveNumber);
  eval->add_option("--iou-type", ea.iou_type, "Overlap measure")->check(CLI::IsMember({"box", "mask"}));
  eval->add_option("--mode", ea.mode, "frame: per-image AR; video: spatio-temporal track AR")
      ->check(CLI::IsMember({"frame", "video"}));
  eval->add_flag("--per-class", ea.per_class, "Match only within equal category ids");
  eval->add_option("--label", ea.label, "Row label of the report");
  eval->add_flag("--csv", ea.csv, "Print CSV instead of the fixed-width table");
  eval->add_flag("--id-switches", ea.id_switches, "Also print the identity-switch count");
  eval->add_option("--out-json", ea.out_json, "Write the full result as JSON for `report`");
  eval->add_option("--jobs", ea.jobs, "Images/videos evaluated in parallel")->check(CLI::PositiveNumber);
  eval->add_flag("--print-config", print_config, "Print the resolved configuration and exit");

  SimArgs sa;
  SequenceSpec& sp = sa.spec;
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic sequence (GT and noisy detections)");
  sim->option_defaults()->always_capture_default();
  sim->fallthrough();
  sim->add_option("--seed", sp.seed, "RNG seed")->required();
  sim->add_option("--objects", sp.n_objects, "Number of objects")->check(CLI::PositiveNumber);
  sim->add_option("--frames", sp.n_frames, "Number of frames")->check(CLI::PositiveNumber);
  sim->add_option("--width", sp.image_width, "Image width")->check(CLI::PositiveNumber);
  sim->add_option("--height", sp.image_height, "Image height")->check(CLI::PositiveNumber);
  sim->add_option("--min-speed", sp.min_speed, "Minimum speed, px/frame");
  sim->add_option("--max-speed", sp.max_speed, "Maximum speed, px/frame");
  sim->add_option("--min-size", sp.min_size, "Minimum box side, px");
  sim->add_option("--max-size", sp.max_size, "Maximum box side, px");
  sim->add_option("--turn-rate", sp.turn_rate, "Maximum heading change per frame, rad");
  sim->add_option("--jitter", sp.jitter_sigma, "Box jitter sigma, px");
  sim->add_option("--score-noise", sp.score_sigma, "Score noise sigma");
  sim->add_option("--drop-rate", sp.drop_rate, "Probability a detection is missed")->check(CLI::Range(0.0, 1.0));
  sim->add_option("--clutter-rate", sp.clutter_rate, "Expected false detections per frame");
  sim->add_option("--embedding-dim", sp.embedding_dim, "Embedding dimension (0 disables)");
  sim->add_option("--embedding-noise", sp.embedding_noise, "Embedding noise sigma");
  sim->add_option("--min-separation", sp.min_separation, "Confine objects to lanes this far apart (0 = off)");
  sim->add_flag("--masks", sp.masks, "Attach filled-box RLE masks");
  sim->add_option("--gt-out", sa.gt_out, "Ground-truth output file");
  sim->add_option("--det-out", sa.det_out, "Detections output file");
  sim->add_flag("--print-config", print_config, "Print the resolved configuration and exit");

  ReportArgs ra;
  auto* rep = app.add_subcommand("report", "Tabulate results written by `eval --out-json`");
  rep->option_defaults()->always_capture_default();
  rep->fallthrough();
  rep->add_flag("--csv", ra.csv, "Print CSV instead of the fixed-width table");
  rep->add_option("inputs", ra.inputs, "Result JSON files, one row each")->configurable(false);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (print_config) {
      for (const CLI::App* sub : app.get_subcommands()) out << dump_config(*sub);
      return kExitOk;
    }
    if (filter->parsed()) return run_filter(fa, out);
    if (track->parsed()) return run_track(ta, out);
    if (eval->parsed()) return run_eval(ea, out);
    if (sim->parsed()) return run_simulate(sa, out);
    if (rep->parsed()) return run_report(ra, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace owtk
