// hydra: command-line front end. Each subcommand wraps one library
// operation; results go to --out (or stdout where noted), logs to stderr.
// Exit codes: 0 ok, 1 invalid input, 2 internal error.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "hydra/config_json.hpp"
#include "hydra/file_io.hpp"
#include "hydra/manifest.hpp"
#include "hydra/numeric_text.hpp"
#include "hydra/preprocess.hpp"
#include "hydra/preview.hpp"
#include "hydra/service.hpp"
#include "hydra/store.hpp"
#include "hydra/stream.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hydra;

namespace {

bool quiet = false;

template <typename... Args>
void log(const Args&... args) {
  if (quiet) return;
  std::cerr << "hydra: ";
  (std::cerr << ... << args);
  std::cerr << '\n';
}

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorCode::InvalidArgument, msg); }

std::string default_data_dir() {
  if (const char* d = std::getenv("HYDRA_DATA_DIR"); d && *d) return d;
  return "hydra-data";
}

// --session takes a CSV path or the id of a stored session. A CSV's
// annotations come from --annotations, else from a sibling <stem>.json.
SessionRecording load_session(const std::string& spec, const std::string& annotations, const std::string& data_dir) {
  if (fs::is_regular_file(spec)) {
    SessionRecording rec;
    rec.id = fs::path(spec).stem().string();
    rec.series = parse_e4_csv(read_file(spec));
    std::string ann = annotations;
    if (ann.empty()) {
      const auto sibling = fs::path(spec).replace_extension(".json");
      if (fs::is_regular_file(sibling)) ann = sibling.string();
    }
    if (!ann.empty()) {
      const auto doc = parse_annotation_json(read_file(ann));
      validate(doc.track, rec.span());
      rec.annotations = doc.track;
      rec.artifact_spans = doc.artifacts;
    }
    return rec;
  }
  if (!service::valid_id(spec)) invalid("session '" + spec + "' is neither a file nor a session id");
  service::SessionStore store(data_dir);
  auto rec = store.load(spec);
  if (!annotations.empty()) {
    const auto doc = parse_annotation_json(read_file(annotations));
    validate(doc.track, rec.span());
    rec.annotations = doc.track;
    rec.artifact_spans = doc.artifacts;
  }
  return rec;
}

void write_out(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << '\n';
    std::cout.flush();
    return;
  }
  write_file_atomic(path, text);
  log("wrote ", path);
}

// Run settings: flags first, then whatever the --config manifest names.
struct RunOptions {
  std::string config_path;
  std::string model_kind{"tree"};
  std::uint64_t seed{7};
  std::optional<double> cutoff;
  std::optional<int> order;
  std::optional<int> hanning;
  std::string tau;
  bool optimize_tau{false};

  void add_feature_flags(CLI::App* app) {
    app->add_option("--cutoff", cutoff, "low-pass cutoff (Hz)");
    app->add_option("--order", order, "Butterworth order (1 or 2)");
    app->add_option("--hanning-width", hanning, "Hanning smoothing width (samples)");
    app->add_option("--tau", tau, "rise,decay time constants (s)");
    app->add_flag("--optimize-tau", optimize_tau, "fit the time constants per session first");
  }

  RunManifest manifest() const {
    RunManifest m;
    if (cutoff) m.features.preprocess.cutoff_hz = *cutoff;
    if (order) m.features.preprocess.filter_order = *order;
    if (hanning) m.features.preprocess.hanning_width = *hanning;
    if (!tau.empty()) {
      const auto comma = tau.find(',');
      const auto r = comma == std::string::npos ? std::nullopt : parse_double(tau.substr(0, comma));
      const auto d = comma == std::string::npos ? std::nullopt : parse_double(tau.substr(comma + 1));
      if (!r || !d) invalid("--tau expects rise,decay");
      m.features.taus = {*r, *d};
    }
    m.features.optimize_taus = optimize_tau;
    m.model.kind = learn::model_kind_from_string(model_kind);
    m.seed = seed;
    if (!config_path.empty()) {
      json j;
      try {
        j = json::parse(read_file(config_path));
      } catch (const json::parse_error& e) {
        invalid("config " + config_path + ": " + e.what());
      }
      if (!j.is_object()) invalid("config " + config_path + ": expected a JSON object");
      const auto parsed = parse_manifest(j.dump());
      if (j.contains("features")) {
        const auto& f = j["features"];
        if (f.contains("preprocess")) m.features.preprocess = parsed.features.preprocess;
        if (f.contains("window")) m.features.window = parsed.features.window;
        if (f.contains("decompose")) m.features.decompose = parsed.features.decompose;
        if (f.contains("tau")) m.features.taus = parsed.features.taus;
        if (f.contains("optimize_tau")) m.features.optimize_taus = parsed.features.optimize_taus;
      }
      if (j.contains("model")) m.model = parsed.model;
      if (j.contains("seed")) m.seed = parsed.seed;
    }
    m.model.forest.seed = m.seed;
    m.model.forest.tree = m.model.tree;
    return m;
  }
};

double parse_speed(const std::string& text) {
  if (text == "inf" || text == "infinity") return INFINITY;
  const auto v = parse_double(text);
  if (!v || *v <= 0) invalid("--speed expects a positive number or inf");
  return *v;
}

// Blocks SIGINT/SIGTERM in every thread; wait_for_signal() returns when one
// arrives.
sigset_t block_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  return set;
}

void wait_for_signal(const sigset_t& set) {
  int sig = 0;
  sigwait(&set, &sig);
  log("received signal ", sig, ", stopping");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hydra: EDA hydration monitoring toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_flag("-q,--quiet", quiet, "no log output");
  std::string data_dir = default_data_dir();
  app.add_option("--data-dir", data_dir, "session store directory (env HYDRA_DATA_DIR)");

  RunOptions run;
  std::string session, annotations, out, csv_path, subject, method{"cda"}, data_path, model_path, speed_text{"inf"},
      webhook, socket_addr, bind_addr, ui_dir;
  std::vector<std::string> sessions, models{"tree"};
  int k = 10, debounce_n = 3, serve_port = -1;
  bool with_predictions = false, sliding = false;

  auto* ingest = app.add_subcommand("ingest", "store an E4-style CSV (and annotations) in the session store");
  ingest->add_option("--csv", csv_path, "E4-style CSV file")->required();
  ingest->add_option("--annotations", annotations, "annotation JSON");
  ingest->add_option("--subject", subject, "subject label");
  ingest->add_option("--out", out, "session info JSON (default stdout)");

  auto* validate_cmd = app.add_subcommand("annotate-validate", "check an annotation JSON file");
  validate_cmd->add_option("--annotations", annotations, "annotation JSON")->required();
  validate_cmd->add_option("--csv", csv_path, "session CSV, to check times against its span");

  auto* pre = app.add_subcommand("preprocess", "artifact correction, low-pass and smoothing; writes E4-style CSV");
  pre->add_option("--session", session, "CSV path or stored session id")->required();
  pre->add_option("--annotations", annotations, "annotation JSON (artifact spans)");
  pre->add_option("--out", out, "output CSV")->required();
  pre->add_option("--config", run.config_path, "run manifest JSON");
  run.add_feature_flags(pre);

  auto* dec = app.add_subcommand("decompose", "CDA or DDA decomposition preview JSON");
  dec->add_option("--session", session, "CSV path or stored session id")->required();
  dec->add_option("--annotations", annotations, "annotation JSON (artifact spans)");
  dec->add_option("--method", method, "cda or dda")->check(CLI::IsMember({"cda", "dda"}));
  dec->add_option("--out", out, "output JSON (default stdout)");
  dec->add_option("--config", run.config_path, "run manifest JSON");
  run.add_feature_flags(dec);

  auto* feat = app.add_subcommand("featurize", "36-feature windowed dataset CSV from annotated sessions");
  feat->add_option("--session", sessions, "CSV path or stored session id (repeatable)")->required();
  feat->add_option("--out", out, "dataset CSV; a .manifest.json is written beside it")->required();
  feat->add_option("--config", run.config_path, "run manifest JSON");
  run.add_feature_flags(feat);

  auto* train = app.add_subcommand("train", "train a classifier on a dataset CSV");
  train->add_option("--data", data_path, "dataset CSV")->required();
  train->add_option("--model", run.model_kind, "tree, forest or nbayes")
      ->check(CLI::IsMember({"tree", "forest", "nbayes"}));
  train->add_option("--seed", run.seed, "random seed");
  train->add_option("--out", out, "model JSON")->required();
  train->add_option("--config", run.config_path, "run manifest JSON (its features section is recorded)");

  auto* eval = app.add_subcommand("evaluate", "stratified k-fold cross-validation; prints the metrics table");
  eval->add_option("--data", data_path, "dataset CSV")->required();
  eval->add_option("--model", models, "tree, forest, nbayes or all (repeatable)")
      ->check(CLI::IsMember({"tree", "forest", "nbayes", "all"}));
  eval->add_option("--k", k, "folds");
  eval->add_option("--seed", run.seed, "fold assignment and forest seed");
  eval->add_option("--out", out, "report JSON");
  eval->add_option("--config", run.config_path, "run manifest JSON (model settings)");

  auto* sim = app.add_subcommand("simulate", "replay a session through the streaming engine; alerts as JSON lines");
  sim->add_option("--session", session, "CSV path or stored session id");
  sim->add_option("--socket", socket_addr, "read samples from a sample socket host:port instead");
  sim->add_option("--model", model_path, "model JSON");
  sim->add_option("--speed", speed_text, "multiple of real time, or inf");
  sim->add_option("--debounce-n", debounce_n, "consecutive predictions needed for an alert")
      ->check(CLI::PositiveNumber);
  sim->add_flag("--sliding", sliding, "predict every second instead of every window");
  sim->add_flag("--predictions", with_predictions, "also print every window prediction");
  sim->add_option("--webhook", webhook, "POST each alert to this URL");
  sim->add_option("--serve-port", serve_port, "serve the session on the sample socket instead of replaying it");
  sim->add_option("--out", out, "JSON lines file (default stdout)");

  auto* serve = app.add_subcommand("serve", "HTTP service for the annotator and live monitor");
  serve->add_option("--bind", bind_addr, "host:port (env HYDRA_BIND_ADDR, default 127.0.0.1:8080)");
  serve->add_option("--ui-dir", ui_dir, "static files served at /");
  serve->add_option("--config", run.config_path, "JSON with a \"serve\" object (data_dir, bind, ui_dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*ingest) {
      service::SessionStore store(data_dir);
      std::optional<AnnotationDocument> doc;
      const auto text = read_file(csv_path);
      if (!annotations.empty()) {
        doc = parse_annotation_json(read_file(annotations));
        const auto series = parse_e4_csv(text);
        validate(doc->track, TimeSpan{series.start_time, series.end_time()});
      }
      auto info = store.create(text, subject);
      if (doc) info.annotation_revision = store.put_annotations(info.id, *doc, 0).revision;
      log("stored session ", info.id, " (", info.samples, " samples)");
      write_out(out, service::session_info_json(info));
    } else if (*validate_cmd) {
      const auto doc = parse_annotation_json(read_file(annotations));
      if (!csv_path.empty()) {
        const auto series = parse_e4_csv(read_file(csv_path));
        validate(doc.track, TimeSpan{series.start_time, series.end_time()});
      }
      std::cout << "ok: " << doc.track.transitions.size() << " transitions, " << doc.artifacts.size()
                << " artifact spans\n";
    } else if (*pre) {
      const auto m = run.manifest();
      const auto rec = load_session(session, annotations, data_dir);
      write_out(out, serialize_e4_csv(preprocess::preprocess_pipeline(rec, m.features.preprocess)));
    } else if (*dec) {
      const auto m = run.manifest();
      const auto rec = load_session(session, annotations, data_dir);
      const auto p = preview::decompose_recording(rec, preview::method_from_string(method), m.features);
      log(method, ": tau ", p.params.tau_rise, ",", p.params.tau_decay, ", ", p.events.size(), " responses");
      write_out(out, preview::preview_json(p));
    } else if (*feat) {
      const auto m = run.manifest();
      features::Dataset data;
      for (const auto& s : sessions) {
        const auto rec = load_session(s, "", data_dir);
        auto part = features::featurize_session(rec, m.features);
        log(rec.id, ": ", part.rows.size(), " windows");
        for (auto& r : part.rows) data.rows.push_back(std::move(r));
      }
      write_out(out, features::write_dataset_csv(data));
      write_out(out + ".manifest.json", features::dataset_manifest_json(data, m.features));
    } else if (*train) {
      auto m = run.manifest();
      // the featurize settings travel with the dataset unless --config names its own
      const auto sidecar = data_path + ".manifest.json";
      const bool config_features =
          !run.config_path.empty() && json::parse(read_file(run.config_path)).contains("features");
      if (fs::is_regular_file(sidecar) && !config_features) {
        const auto j = json::parse(read_file(sidecar));
        if (j.value("feature_order_hash", "") != features::feature_order_hash())
          throw Error(ErrorCode::FeatureOrderMismatch, sidecar + " describes a different feature layout");
        m.features = j.at("config").get<features::FeatureConfig>();
      }
      const auto data = features::read_dataset_csv(read_file(data_path));
      const auto model = train_with_manifest(data, m);
      log("trained ", learn::to_string(model.kind), " on ", data.rows.size(), " rows");
      learn::save_model(model, out);
      log("wrote ", out);
    } else if (*eval) {
      const auto m = run.manifest();
      const auto data = features::read_dataset_csv(read_file(data_path));
      std::vector<learn::ModelKind> kinds;
      for (const auto& name : models) {
        if (name == "all") {
          kinds = {learn::ModelKind::Tree, learn::ModelKind::Forest, learn::ModelKind::NBayes};
          break;
        }
        kinds.push_back(learn::model_kind_from_string(name));
      }
      std::vector<std::pair<std::string, learn::MetricsReport>> columns;
      json reports = json::array();
      for (const auto kind : kinds) {
        auto spec = m.model;
        spec.kind = kind;
        const auto report = learn::cross_validate(data, spec, k, m.seed);
        columns.emplace_back(learn::display_name(kind), report);
        reports.push_back(json::parse(learn::report_json(report)));
      }
      std::cout << learn::render_table(columns);
      std::cout.flush();
      if (!out.empty()) write_out(out, reports.size() == 1 ? reports[0].dump(2) : json{{"reports", reports}}.dump(2));
    } else if (*sim) {
      if (session.empty() == socket_addr.empty()) invalid("simulate needs exactly one of --session and --socket");
      const double speed = parse_speed(speed_text);
      if (serve_port >= 0) {
        if (session.empty()) invalid("--serve-port needs --session");
        const auto signals = block_signals();
        stream::SampleServer server(load_session(session, "", data_dir), speed, serve_port);
        log("serving samples on 127.0.0.1:", server.port());
        std::cout << json{{"port", server.port()}}.dump() << std::endl;
        wait_for_signal(signals);
        return 0;
      }
      if (model_path.empty()) invalid("simulate needs --model");
      const auto model = learn::load_model(model_path);
      auto cfg = stream::engine_config_for(model);
      cfg.debounce_n = debounce_n;
      cfg.sliding = sliding;

      std::ofstream file;
      std::ostream* os = &std::cout;
      if (!out.empty() && out != "-") {
        file.open(out);
        if (!file) throw Error(ErrorCode::Io, "cannot write " + out);
        os = &file;
      }
      stream::JsonLinesSink lines(*os, with_predictions);
      std::optional<stream::WebhookSink> hook;
      std::vector<stream::AlertSink*> sinks{&lines};
      if (!webhook.empty()) sinks.push_back(&hook.emplace(webhook));

      std::size_t n_pred = 0, n_alert = 0;
      if (!session.empty()) {
        const auto summary = stream::replay(load_session(session, "", data_dir), model, cfg, speed, sinks);
        n_pred = summary.predictions.size();
        n_alert = summary.alerts.size();
      } else {
        const auto [host, port] = service::parse_bind_addr(socket_addr);
        stream::StreamEngine engine(model, cfg);
        stream::CollectingSink count;
        engine.add_sink(&count);
        for (auto* s : sinks) engine.add_sink(s);
        const auto samples = stream::consume_socket(host, port, engine);
        log("read ", samples, " samples");
        n_pred = count.predictions.size();
        n_alert = count.alerts.size();
      }
      if (hook) {
        hook->flush();
        log("webhook: ", hook->delivered(), " delivered, ", hook->failed(), " failed");
      }
      log(n_pred, " predictions, ", n_alert, " alerts");
    } else if (*serve) {
      service::ServerConfig cfg;
      cfg.data_dir = data_dir;
      cfg = service::server_config_from_env(cfg);
      if (app.get_option("--data-dir")->count()) cfg.data_dir = data_dir;
      if (!bind_addr.empty()) std::tie(cfg.host, cfg.port) = service::parse_bind_addr(bind_addr);
      if (!ui_dir.empty()) cfg.ui_dir = ui_dir;
      if (!run.config_path.empty()) {
        const auto j = json::parse(read_file(run.config_path));
        if (j.contains("serve")) {
          const auto& s = j["serve"];
          if (s.contains("data_dir")) cfg.data_dir = s["data_dir"].get<std::string>();
          if (s.contains("bind")) std::tie(cfg.host, cfg.port) = service::parse_bind_addr(s["bind"].get<std::string>());
          if (s.contains("ui_dir")) cfg.ui_dir = s["ui_dir"].get<std::string>();
        }
      }
      const auto signals = block_signals();
      service::Service svc(cfg.data_dir);
      service::HttpServer http(svc, cfg.ui_dir);
      const int port = http.bind(cfg.host, cfg.port);
      log("serving ", cfg.data_dir.string(), " on http://", cfg.host, ":", port);
      std::cout << json{{"host", cfg.host}, {"port", port}}.dump() << std::endl;
      std::thread listener([&] { http.listen(); });
      wait_for_signal(signals);
      svc.shutdown();
      http.stop();
      listener.join();
    }
  } catch (const Error& e) {
    std::cerr << "hydra: error (" << to_string(e.code()) << "): " << e.what() << '\n';
    return 1;
  } catch (const json::exception& e) {
    std::cerr << "hydra: error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "hydra: internal error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
