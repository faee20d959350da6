#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <csignal>
#include <cstdlib>
#include <iostream>

#include "restorer/rating/http.hpp"

using namespace restorer::rating;

namespace {

HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Blinded listening-test rating server"};
  std::vector<std::filesystem::path> studies;
  std::filesystem::path journal_dir = "rating_journal";
  std::string host = "127.0.0.1";
  int port = 8080;
  std::uint64_t seed = 0;
  double ttl_hours = 168.0;
  app.add_option("--study", studies, "Study definition JSON (repeatable)")->required()->check(CLI::ExistingFile);
  app.add_option("--journal-dir", journal_dir, "Directory of the per-study rating journals")->capture_default_str();
  app.add_option("--host", host, "Listen address")->capture_default_str();
  app.add_option("--port", port, "Listen port (0 picks a free one)")->capture_default_str();
  app.add_option("--seed", seed, "Seed for presentation orders")->capture_default_str();
  app.add_option("--session-ttl-hours", ttl_hours, "Session lifetime")->check(CLI::PositiveNumber)->capture_default_str();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    ServiceOptions opts;
    opts.journal_dir = journal_dir;
    opts.seed = seed;
    opts.session_ttl_ms = static_cast<std::int64_t>(ttl_hours * 3600.0 * 1000.0);
    RatingService service(opts);
    for (const auto& s : studies) service.add_study(load_study(s));

    const char* admin = std::getenv("RESTORER_ADMIN_TOKEN");
    if (!admin || !*admin) spdlog::warn("RESTORER_ADMIN_TOKEN is not set; export endpoints are disabled");
    HttpServer server(service, admin ? admin : "");
    const int bound = server.bind(host, port);
    if (bound < 0) {
      std::cerr << "error: cannot bind " << host << ":" << port << "\n";
      return 1;
    }
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cout << "listening on http://" << host << ":" << bound << std::endl;
    server.listen();
    g_server = nullptr;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
