#include "maskjudge/review_server.hpp"

#include <httplib.h>

#include <algorithm>
#include <thread>

#include "maskjudge/annotations.hpp"
#include "maskjudge/error.hpp"
#include "maskjudge/io.hpp"

namespace maskjudge::runner {
namespace {

constexpr const char* kFallbackIndex = R"(<!doctype html>
<html><head><meta charset="utf-8"><title>maskjudge review</title></head>
<body>
<h1>maskjudge review service</h1>
<p>No UI assets were configured. The annotation API is available:</p>
<ul>
<li>GET /api/samples</li>
<li>GET /api/samples/{id}</li>
<li>GET /api/images/{id}/original | masked</li>
<li>POST /api/annotations</li>
<li>GET /api/report</li>
</ul>
</body></html>
)";

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

struct ReviewServer::Impl {
  ReviewOptions options;
  ResultStore store;
  AnnotationStore annotations;
  std::map<std::string, const ManifestRecord*> by_id;
  httplib::Server server;
  std::thread thread;
  bool bound = false;

  explicit Impl(ReviewOptions opts)
      : options(std::move(opts)),
        store(options.out_dir),
        annotations(options.out_dir / "annotations.jsonl") {
    for (const ManifestRecord& r : options.manifest) by_id[r.sample_id] = &r;
  }

  nlohmann::json sample_summary(const ManifestRecord& rec, const std::string& annotator) const {
    nlohmann::json item{{"sample_id", rec.sample_id},
                        {"predicted_label", rec.predicted_label},
                        {"true_label", rec.true_label}};
    const auto row = store.latest_for_sample(rec.sample_id);
    if (row) {
      const auto r = metrics::SampleResult::make(rec.sample_id, rec.predicted_label, rec.true_label, row->score);
      item["status"] = "scored";
      item["quadrant"] = metrics::quadrant_code(metrics::classify_quadrant(r, options.threshold));
    } else {
      item["status"] = "pending";
      item["quadrant"] = nullptr;
    }
    const auto notes = annotations.for_sample(rec.sample_id);
    item["annotation_count"] = notes.size();
    item["annotated"] = annotator.empty()
                            ? !notes.empty()
                            : std::any_of(notes.begin(), notes.end(),
                                          [&](const AnnotationRecord& a) { return a.annotator_id == annotator; });
    return item;
  }

  nlohmann::json report() const {
    std::vector<ResultRow> rows;
    for (const ManifestRecord& rec : options.manifest) {
      if (auto row = store.latest_for_sample(rec.sample_id)) rows.push_back(std::move(*row));
    }
    nlohmann::json out;
    if (rows.empty()) {
      out["matrix"] = nullptr;
    } else {
      const auto m = metrics::build_confusion_matrix(to_sample_results(rows), options.threshold);
      out["matrix"] = {{"n", m.n},           {"ch", m.ch},           {"cl", m.cl},
                       {"wh", m.wh},         {"wl", m.wl},           {"ch_pct", m.ch_pct},
                       {"cl_pct", m.cl_pct}, {"wh_pct", m.wh_pct},   {"wl_pct", m.wl_pct},
                       {"avg_score", m.avg_score}, {"err_pct", m.err_pct}};
    }
    nlohmann::json stages = nlohmann::json::object();
    for (auto q : metrics::kQuadrants) stages[std::string(metrics::quadrant_code(q))] = metrics::stage_name(q);
    out["stage_names"] = stages;

    const HumanScores human = annotations.mean_scores();
    std::vector<double> vlm, people;
    for (const ResultRow& r : rows) {
      if (auto it = human.find(r.sample_id); it != human.end()) {
        vlm.push_back(r.score);
        people.push_back(it->second);
      }
    }
    out["pc_pairs"] = vlm.size();
    try {
      out["pc"] = metrics::pearson(vlm, people);
      out["pc_error"] = nullptr;
    } catch (const Error& e) {
      out["pc"] = nullptr;
      out["pc_error"] = e.what();
    }

    const auto records = annotations.records();
    auto accepted = std::make_unique<bool[]>(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) accepted[i] = records[i].vlm_text_accepted;
    const std::span<const bool> flags(accepted.get(), records.size());
    out["ar_accepted"] = std::count(flags.begin(), flags.end(), true);
    out["ar_total"] = flags.size();
    out["ar"] = flags.empty() ? nlohmann::json() : nlohmann::json(metrics::acceptance_rate(flags));
    out["progress"] = {{"samples", options.manifest.size()},
                       {"scored", rows.size()},
                       {"annotated", human.size()},
                       {"annotations", records.size()}};
    return out;
  }

  void routes() {
    // httplib's default turns on SO_REUSEPORT, which would let a second
    // server share a busy port.
    server.set_socket_options([](socket_t sock) {
      int yes = 1;
      ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    server.Get("/api/samples", [this](const httplib::Request& req, httplib::Response& res) {
      store.reload();
      const std::string filter = req.has_param("filter") ? req.get_param_value("filter") : "all";
      const std::string annotator = req.get_param_value("annotator");
      long page = 1, page_size = 50;
      try {
        if (req.has_param("page")) page = std::stol(req.get_param_value("page"));
        if (req.has_param("page_size")) page_size = std::stol(req.get_param_value("page_size"));
      } catch (const std::exception&) {
        return send_json(res, 400, {{"error", "page and page_size must be integers"}});
      }
      if (page < 1 || page_size < 1 || page_size > 500) {
        return send_json(res, 400, {{"error", "page must be >= 1 and page_size in 1-500"}});
      }
      if (filter != "all" && filter != "unannotated" && filter != "CH" && filter != "CL" &&
          filter != "WH" && filter != "WL") {
        return send_json(res, 400, {{"error", "unknown filter '" + filter + "'"}});
      }
      std::vector<nlohmann::json> items;
      for (const ManifestRecord& rec : options.manifest) {
        nlohmann::json item = sample_summary(rec, annotator);
        if (filter == "unannotated" && item["annotated"].get<bool>()) continue;
        if (filter.size() == 2 && item["quadrant"] != filter) continue;
        items.push_back(std::move(item));
      }
      const std::size_t total = items.size();
      const std::size_t pages = (total + static_cast<std::size_t>(page_size) - 1) / static_cast<std::size_t>(page_size);
      const std::size_t begin = std::min(total, static_cast<std::size_t>((page - 1) * page_size));
      const std::size_t end = std::min(total, begin + static_cast<std::size_t>(page_size));
      send_json(res, 200,
                {{"page", page},
                 {"page_size", page_size},
                 {"total", total},
                 {"pages", pages},
                 {"items", nlohmann::json(std::vector<nlohmann::json>(items.begin() + static_cast<std::ptrdiff_t>(begin),
                                                                      items.begin() + static_cast<std::ptrdiff_t>(end)))}});
    });

    server.Get(R"(/api/samples/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
      store.reload();
      const auto it = by_id.find(req.matches[1].str());
      if (it == by_id.end()) return send_json(res, 404, {{"error", "unknown sample"}});
      const ManifestRecord& rec = *it->second;
      nlohmann::json out = sample_summary(rec, req.get_param_value("annotator"));
      out["images"] = {{"original", "/api/images/" + rec.sample_id + "/original"},
                       {"masked", "/api/images/" + rec.sample_id + "/masked"}};
      if (const auto row = store.latest_for_sample(rec.sample_id)) {
        out["assessment"] = {{"evaluation", row->evaluation},
                             {"justification", row->justification},
                             {"score", row->score},
                             {"model_name", row->model_name},
                             {"alpha", row->alpha},
                             {"beta", row->beta}};
      } else {
        out["assessment"] = nullptr;
      }
      nlohmann::json notes = nlohmann::json::array();
      for (const auto& a : annotations.for_sample(rec.sample_id)) notes.push_back(a.to_json());
      out["annotations"] = notes;
      send_json(res, 200, out);
    });

    server.Get(R"(/api/images/(.+)/(original|masked))", [this](const httplib::Request& req, httplib::Response& res) {
      const auto it = by_id.find(req.matches[1].str());
      if (it == by_id.end()) return send_json(res, 404, {{"error", "unknown sample"}});
      std::filesystem::path path;
      if (req.matches[2] == "original") {
        path = it->second->image_path;
      } else {
        store.reload();
        const auto row = store.latest_for_sample(it->first);
        if (!row || row->masked_image_path.empty()) {
          return send_json(res, 404, {{"error", "no masked image yet"}});
        }
        path = options.out_dir / row->masked_image_path;
      }
      try {
        const auto bytes = io::read_bytes(path);
        res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
      } catch (const Error& e) {
        send_json(res, 404, {{"error", e.what()}});
      }
    });

    server.Post("/api/annotations", [this](const httplib::Request& req, httplib::Response& res) {
      const nlohmann::json body = nlohmann::json::parse(req.body, nullptr, false);
      if (body.is_discarded()) {
        return send_json(res, 400, {{"error", "body is not JSON"}, {"fields", nlohmann::json::array()}});
      }
      try {
        AnnotationRecord record = parse_annotation(body);
        if (!by_id.count(record.sample_id)) {
          throw Error(ErrorKind::Validation, "sample_id: unknown sample '" + record.sample_id + "'");
        }
        nlohmann::json saved = record.to_json();
        annotations.add(std::move(record));
        send_json(res, 201, saved);
      } catch (const Error& e) {
        nlohmann::json fields = nlohmann::json::array();
        std::string msg = e.what();
        std::size_t pos = 0;
        while (pos <= msg.size()) {
          std::size_t semi = msg.find("; ", pos);
          if (semi == std::string::npos) semi = msg.size();
          fields.push_back(msg.substr(pos, semi - pos));
          pos = semi + 2;
        }
        send_json(res, 400, {{"error", msg}, {"fields", fields}});
      }
    });

    server.Get("/api/report", [this](const httplib::Request&, httplib::Response& res) {
      store.reload();
      send_json(res, 200, report());
    });

    if (!options.ui_dir.empty() && std::filesystem::is_directory(options.ui_dir)) {
      server.set_mount_point("/", options.ui_dir.string());
    } else {
      server.Get("/", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(kFallbackIndex, "text/html");
      });
    }
  }
};

ReviewServer::ReviewServer(ReviewOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {
  impl_->routes();
}

ReviewServer::~ReviewServer() { stop(); }

int ReviewServer::bind(const std::string& bind_addr) {
  const std::size_t colon = bind_addr.rfind(':');
  if (colon == std::string::npos) {
    throw Error(ErrorKind::Validation, "bind address must be host:port, got '" + bind_addr + "'");
  }
  const std::string host = bind_addr.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(bind_addr.substr(colon + 1));
  } catch (const std::exception&) {
    throw Error(ErrorKind::Validation, "bad port in bind address '" + bind_addr + "'");
  }
  if (port == 0) {
    port = impl_->server.bind_to_any_port(host);
    if (port < 0) throw Error(ErrorKind::Io, "cannot bind " + host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    throw Error(ErrorKind::Io, "cannot bind " + bind_addr + " (port busy or address unavailable)");
  }
  impl_->bound = true;
  return port;
}

void ReviewServer::start() {
  if (!impl_->bound) throw Error(ErrorKind::Precondition, "review server is not bound");
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void ReviewServer::run() {
  if (!impl_->bound) throw Error(ErrorKind::Precondition, "review server is not bound");
  impl_->server.listen_after_bind();
}

void ReviewServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

nlohmann::json ReviewServer::report() const {
  impl_->store.reload();
  return impl_->report();
}

void serve_review(ReviewOptions options, const std::string& bind_addr) {
  ReviewServer server(std::move(options));
  server.bind(bind_addr);
  server.run();
}

}  // namespace maskjudge::runner
