#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "scribtex/config.hpp"
#include "scribtex/error.hpp"

namespace scribtex {

struct ServiceOptions {
    std::filesystem::path root = "sessions";  // one sub-directory per session
    std::string host = "127.0.0.1";
    int port = 8080;  // 0 picks a free port
    PipelineConfig config;
    std::filesystem::path static_dir;  // optional UI bundle mounted at /
};

/// REST + server-sent-events front end over directory sessions.
class Service {
public:
    explicit Service(ServiceOptions opts);
    ~Service();

    /// Binds and returns the port.
    int bind();
    /// Blocks serving requests until stop().
    void run();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// HTTP status for an error code.
int http_status(ErrorCode code);

}  // namespace scribtex
