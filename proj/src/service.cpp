#include "scribtex/service.hpp"

#include <httplib.h>

#include <chrono>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include "scribtex/error.hpp"
#include "scribtex/pipeline.hpp"

namespace fs = std::filesystem;

namespace scribtex {

int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::NotFound: return 404;
        case ErrorCode::OverlappingRegions: return 409;
        case ErrorCode::Halted: return 503;
        case ErrorCode::Timeout: return 504;
        default: break;
    }
    switch (category_of(code)) {
        case ErrorCategory::Validation: return 400;
        case ErrorCategory::Backend: return 502;
        case ErrorCategory::Io:
        case ErrorCategory::Pipeline: return 500;
    }
    return 500;
}

namespace {

void send_json(httplib::Response& res, const nlohmann::json& j, int status = 200) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message,
                const std::string& stage = {}) {
    send_json(res, {{"code", code}, {"message", message}, {"stage", stage}}, status);
}

std::string read_all(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

nlohmann::json body_json(const httplib::Request& req) {
    if (req.body.empty()) return nlohmann::json::object();
    auto j = nlohmann::json::parse(req.body, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::Validation, "request body is not valid JSON");
    return j;
}

bool safe_segment(const std::string& s) {
    return !s.empty() && s.find("..") == std::string::npos && s.find('/') == std::string::npos &&
           s.find('\\') == std::string::npos;
}

}  // namespace

struct Service::Impl {
    ServiceOptions opts;
    httplib::Server server;
    std::mutex mu;
    std::map<std::string, std::shared_ptr<Session>> sessions;
    int port = 0;

    std::shared_ptr<Session> session(const std::string& id) {
        if (!safe_segment(id)) throw Error(ErrorCode::NotFound, "no session '" + id + "'");
        std::lock_guard lock(mu);
        auto it = sessions.find(id);
        if (it != sessions.end()) return it->second;
        const fs::path dir = opts.root / id;
        if (!Session::exists(dir)) throw Error(ErrorCode::NotFound, "no session '" + id + "'");
        std::shared_ptr<Session> s = Session::open(dir);
        sessions[id] = s;
        return s;
    }

    /// Wraps a handler with the JSON error contract.
    httplib::Server::Handler guarded(std::function<void(const httplib::Request&, httplib::Response&)> fn,
                                     std::string region_param = {}) {
        return [this, fn = std::move(fn), region_param](const httplib::Request& req, httplib::Response& res) {
            try {
                fn(req, res);
            } catch (const Error& e) {
                std::string stage;
                if (!region_param.empty() && req.path_params.contains("id") && req.path_params.contains(region_param)) {
                    try {
                        stage = session(req.path_params.at("id"))->region(req.path_params.at(region_param)).error_stage;
                    } catch (const Error&) {
                    }
                }
                send_error(res, http_status(e.code()), std::string(to_string(e.code())), e.what(), stage);
            } catch (const nlohmann::json::exception& e) {
                send_error(res, 400, "Validation", e.what());
            } catch (const std::exception& e) {
                send_error(res, 500, "Pipeline", e.what());
            }
        };
    }

    void routes() {
        server.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
            if (!req.has_file("mesh") || !req.has_file("atlas"))
                throw Error(ErrorCode::Validation, "multipart fields 'mesh' and 'atlas' are required");
            PipelineConfig cfg = opts.config;
            if (req.has_file("config")) cfg = PipelineConfig::from_json(parse_toml(req.get_file_value("config").content));
            const fs::path staging = opts.root / ".uploads" / std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
            fs::create_directories(staging);
            {
                std::ofstream(staging / "mesh.obj", std::ios::binary) << req.get_file_value("mesh").content;
                std::ofstream(staging / "atlas.png", std::ios::binary) << req.get_file_value("atlas").content;
            }
            std::shared_ptr<Session> s;
            for (int attempt = 0; !s; ++attempt) {
                std::unique_ptr<Session> created =
                    Session::create(opts.root / ("tmp-" + std::to_string(attempt) + "-" + staging.filename().string()),
                                    staging / "mesh.obj", staging / "atlas.png", cfg);
                const fs::path final_dir = opts.root / created->id();
                const std::string id = created->id();
                const fs::path tmp_dir = created->dir();
                created.reset();
                if (fs::exists(final_dir)) {
                    fs::remove_all(tmp_dir);
                    continue;
                }
                fs::rename(tmp_dir, final_dir);
                s = session(id);
            }
            fs::remove_all(staging);
            send_json(res, s->summary(), 201);
        }));

        server.Get("/sessions/:id", guarded([this](const httplib::Request& req, httplib::Response& res) {
            send_json(res, session(req.path_params.at("id"))->summary());
        }));

        server.Get("/sessions/:id/views/:view/:file", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const std::string file = req.path_params.at("file");
            RenderMode mode;
            if (file == "color.png") mode = RenderMode::Textured;
            else if (file == "geometry.png") mode = RenderMode::Geometry;
            else throw Error(ErrorCode::NotFound, "unknown view image '" + file + "'");
            const fs::path p = session(req.path_params.at("id"))->view_png(req.path_params.at("view"), mode);
            res.set_content(read_all(p), "image/png");
        }));

        server.Post("/sessions/:id/regions", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto s = session(req.path_params.at("id"));
            const auto ids = s->add_regions(parse_stroke_submission(body_json(req)));
            send_json(res, {{"region_ids", ids}}, 201);
        }));

        server.Post("/sessions/:id/regions/:r/refine",
                    guarded([this](const httplib::Request& req, httplib::Response& res) {
                        send_json(res, session(req.path_params.at("id"))->refine(req.path_params.at("r")));
                    }, "r"));

        server.Get("/sessions/:id/regions/:r/intents",
                   guarded([this](const httplib::Request& req, httplib::Response& res) {
                       send_json(res, session(req.path_params.at("id"))->intents(req.path_params.at("r")));
                   }, "r"));

        server.Post("/sessions/:id/regions/:r/run", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto body = body_json(req);
            std::optional<int> rank;
            if (body.contains("intent_rank") && !body["intent_rank"].is_null()) rank = body["intent_rank"].get<int>();
            send_json(res, session(req.path_params.at("id"))->run_edit(req.path_params.at("r"), rank));
        }, "r"));

        server.Post("/sessions/:id/run-multi", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto body = body_json(req);
            send_json(res, session(req.path_params.at("id"))->run_multi(body.at("region_ids").get<std::vector<std::string>>()));
        }));

        server.Get("/sessions/:id/export", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto bytes = session(req.path_params.at("id"))->export_zip();
            res.set_header("Content-Disposition", "attachment; filename=\"" + req.path_params.at("id") + ".zip\"");
            res.set_content(std::string(bytes.begin(), bytes.end()), "application/zip");
        }));

        server.Get("/sessions/:id/events", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto s = session(req.path_params.at("id"));
            const bool follow = req.get_param_value("follow") != "0";
            const fs::path path = s->events_path();
            auto offset = std::make_shared<std::streamoff>(0);
            res.set_header("Cache-Control", "no-cache");
            res.set_chunked_content_provider("text/event-stream", [path, offset, follow](std::size_t, httplib::DataSink& sink) {
                std::ifstream in(path, std::ios::binary);
                bool wrote = false;
                if (in) {
                    in.seekg(*offset);
                    std::string line;
                    while (std::getline(in, line)) {
                        if (in.eof()) break;  // partial line still being written
                        *offset = in.tellg();
                        if (line.empty()) continue;
                        const auto e = nlohmann::json::parse(line, nullptr, false);
                        if (e.is_discarded()) continue;
                        const std::string frame = "id: " + std::to_string(e.value("seq", 0)) + "\nevent: " +
                                                  e.value("type", "message") + "\ndata: " + line + "\n\n";
                        if (!sink.write(frame.data(), frame.size())) return false;
                        wrote = true;
                    }
                }
                if (!follow) {
                    sink.done();
                    return true;
                }
                if (!wrote) {
                    const std::string ping = ": keep-alive\n\n";
                    std::this_thread::sleep_for(std::chrono::milliseconds(200));
                    if (!sink.is_writable()) return false;
                    if (!sink.write(ping.data(), ping.size())) return false;
                }
                return true;
            });
        }));

        fs::create_directories(opts.root);
        server.set_mount_point("/artifacts", opts.root.string());
        if (!opts.static_dir.empty()) server.set_mount_point("/", opts.static_dir.string());
        server.set_payload_max_length(512ull << 20);
    }
};

Service::Service(ServiceOptions opts) : impl_(std::make_unique<Impl>()) {
    impl_->opts = std::move(opts);
    impl_->opts.config.validate();
    impl_->routes();
}

Service::~Service() { stop(); }

int Service::bind() {
    if (impl_->opts.port == 0) {
        impl_->port = impl_->server.bind_to_any_port(impl_->opts.host);
    } else {
        if (!impl_->server.bind_to_port(impl_->opts.host, impl_->opts.port))
            throw Error(ErrorCode::Io, "cannot bind " + impl_->opts.host + ":" + std::to_string(impl_->opts.port));
        impl_->port = impl_->opts.port;
    }
    if (impl_->port <= 0) throw Error(ErrorCode::Io, "cannot bind " + impl_->opts.host);
    return impl_->port;
}

void Service::run() { impl_->server.listen_after_bind(); }

void Service::stop() {
    if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace scribtex
