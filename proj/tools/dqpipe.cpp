// dqpipe command line: synth, init, run, serve, bench.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <regex>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dqpipe/bench.hpp"
#include "dqpipe/error.hpp"
#include "dqpipe/ingest.hpp"
#include "dqpipe/registry.hpp"
#include "dqpipe/runtime.hpp"

namespace fs = std::filesystem;
using namespace dqpipe;
using nlohmann::json;

namespace {

json load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(Errc::NotFound, "cannot open config " + path);
  try {
    return json::parse(f, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw Error(Errc::InvalidConfig, path + ": " + e.what());
  }
}

// "stream" object, or "preset": "default" with an optional seed.
StreamSpec stream_from(const json& cfg) {
  if (cfg.contains("stream")) return cfg.at("stream").get<StreamSpec>();
  const auto seed = cfg.value("seed", std::uint64_t{1});
  if (cfg.value("preset", std::string("default")) != "default")
    throw Error(Errc::InvalidConfig, "unknown preset");
  return default_stream(seed);
}

PipelineConfig pipeline_from(const json& cfg) {
  PipelineConfig p = cfg.value("pipeline", PipelineConfig{});
  if (cfg.contains("strategy")) {
    const auto& s = cfg.at("strategy");
    p = strategy_config(p, s.at("name").get<std::string>(), s.value("param", 0.0));
  }
  p.validate();
  return p;
}

std::string store_from(const json& cfg) { return cfg.value("store", std::string("store")); }

// cycle_<id>.csv files of a directory in id order.
std::vector<std::pair<std::uint64_t, std::string>> cycle_files(const std::string& dir) {
  static const std::regex re(R"(cycle_(\d+)\.csv)");
  std::vector<std::pair<std::uint64_t, std::string>> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = e.path().filename().string();
    if (std::regex_match(name, m, re)) out.emplace_back(std::stoull(m[1]), e.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::map<std::uint64_t, double> labels_in(const std::string& dir) {
  std::map<std::uint64_t, double> out;
  if (fs::exists(dir + "/labels.csv"))
    for (const auto& [id, v] : read_labels_csv(dir + "/labels.csv")) out[id] = v;
  return out;
}

int cmd_synth(const std::string& config, const std::string& out) {
  const auto cfg = load_config(config);
  SynthConfig synth = cfg.contains("synth") ? cfg.at("synth").get<SynthConfig>()
                                            : stream_from(cfg).synth;
  fs::create_directories(out);
  SynthStream s(synth);
  std::vector<std::pair<std::uint64_t, double>> labels;
  std::size_t n = 0;
  while (auto c = s.next()) {
    write_cycle_csv(out + "/cycle_" + std::to_string(c->cycle_id) + ".csv", c->readings);
    labels.emplace_back(c->cycle_id, *c->label);
    ++n;
  }
  write_labels_csv(out + "/labels.csv", labels);
  std::cout << "wrote " << n << " cycles to " << out << '\n';
  return 0;
}

int cmd_init(const std::string& config) {
  const auto cfg = load_config(config);
  const auto pcfg = pipeline_from(cfg);
  const std::string store = store_from(cfg);
  Registry reg(store, {.fsync = pcfg.fsync});
  if (reg.current_deployment())
    throw Error(Errc::InvalidConfig, "store " + store + " is already initialized");

  InitArtifacts art;
  if (cfg.contains("baseline_dir")) {
    const std::string dir = cfg.at("baseline_dir").get<std::string>();
    const auto labels = labels_in(dir);
    std::vector<PumpCycle> cycles;
    for (const auto& [id, path] : cycle_files(dir)) {
      PumpCycle c{id, read_cycle_csv(path), std::nullopt};
      if (auto it = labels.find(id); it != labels.end()) c.label = it->second;
      cycles.push_back(std::move(c));
    }
    art = prepare_init(cycles, pcfg);
  } else {
    const auto data = materialize(stream_from(cfg), pcfg.window_size);
    art = prepare_init(data.baseline, data.baseline_labels, pcfg);
  }
  Pipeline p(pcfg, reg);
  p.init_from(art);
  p.save_state(store + "/state.json");
  const auto d = p.deployment();
  std::cout << "initialized " << store << " deployment " << d.id;
  for (const auto& [k, v] : d.versions) std::cout << ' ' << to_string(k) << ':' << v;
  std::cout << '\n';
  return 0;
}

struct Session {
  PipelineConfig cfg;
  std::string store;
  Registry reg;
  Pipeline pipe;
  PredictionCsv csv;

  Session(const json& c, const std::string& predictions)
      : cfg(pipeline_from(c)),
        store(store_from(c)),
        reg(store, {.fsync = cfg.fsync}),
        pipe(cfg, reg),
        csv(predictions.empty() ? store + "/predictions.csv" : predictions, true) {
    pipe.load_state(store + "/state.json");
    pipe.on_record = [this](const PredictionRecord& r) { csv.write(r); };
  }
  ~Session() {
    try {
      pipe.save_state(store + "/state.json");
    } catch (const std::exception& e) {
      std::cerr << "warning: state not saved: " << e.what() << '\n';
    }
  }
};

// Socket rows are `timestamp_ns,value`; `END <cycle_id> [label]` closes a cycle.
std::size_t run_socket(Session& s, const std::string& host, int port) {
  std::size_t windows = 0;
  std::vector<Reading> cycle;
  std::size_t line_no = 0;
  auto on_line = [&](const std::string& line) {
    ++line_no;
    if (line.empty()) return;
    if (line.rfind("END", 0) == 0) {
      std::istringstream in(line.substr(3));
      std::uint64_t id = 0;
      if (!(in >> id)) throw MalformedRecordError(line_no, "END needs a cycle id");
      double label = 0.0;
      const bool has_label = static_cast<bool>(in >> label);
      if (cycle.size() >= s.cfg.window_size) {
        cycle.resize(s.cfg.window_size);
        s.pipe.step(make_window(std::move(cycle), s.pipe.next_window_id(), id, s.cfg.window_size));
        ++windows;
      }
      cycle.clear();
      if (has_label) s.pipe.observe_label(id, label);
      return;
    }
    cycle.push_back(parse_csv_row(line, line_no));
  };

  const int ls = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  const int one = 1;
  ::setsockopt(ls, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1 ||
      ::bind(ls, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(ls, 1) != 0) {
    ::close(ls);
    throw Error(Errc::InvalidConfig, "cannot listen on " + host + ":" + std::to_string(port));
  }
  const int fd = ::accept(ls, nullptr, nullptr);
  ::close(ls);
  std::string buf;
  char chunk[65536];
  ssize_t k;
  while ((k = ::recv(fd, chunk, sizeof chunk, 0)) > 0) {
    buf.append(chunk, static_cast<std::size_t>(k));
    std::size_t pos, start = 0;
    while ((pos = buf.find('\n', start)) != std::string::npos) {
      std::string line = buf.substr(start, pos - start);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      on_line(line);
      start = pos + 1;
    }
    buf.erase(0, start);
  }
  if (!buf.empty()) on_line(buf);
  ::close(fd);
  return windows;
}

int cmd_run(const std::string& config, const std::string& source, const std::string& out) {
  Session s(load_config(config), out);
  std::size_t windows = 0;
  static const std::regex tcp(R"(tcp:([^:]+):(\d+))");
  std::smatch m;
  if (std::regex_match(source, m, tcp)) {
    windows = run_socket(s, m[1], std::stoi(m[2]));
  } else {
    const auto labels = labels_in(source);
    for (const auto& [id, path] : cycle_files(source)) {
      auto readings = read_cycle_csv(path);
      if (readings.size() < s.cfg.window_size) {
        std::cerr << "skipping " << path << ": shorter than one window\n";
        continue;
      }
      readings.resize(s.cfg.window_size);
      s.pipe.step(make_window(std::move(readings), s.pipe.next_window_id(), id, s.cfg.window_size));
      ++windows;
      if (auto it = labels.find(id); it != labels.end()) s.pipe.observe_label(id, it->second);
    }
  }
  std::cout << "processed " << windows << " windows, " << s.pipe.adaptations()
            << " adaptations, deployment " << s.pipe.deployment().id << '\n';
  return 0;
}

int cmd_serve(const std::string& config, const std::string& listen, std::size_t max_conn) {
  Session s(load_config(config), "");
  if (listen.empty()) {
    serve_stream(s.pipe, std::cin, std::cout);
    return 0;
  }
  const auto colon = listen.rfind(':');
  if (colon == std::string::npos) throw Error(Errc::InvalidConfig, "--listen wants host:port");
  serve_tcp(s.pipe, listen.substr(0, colon), std::stoi(listen.substr(colon + 1)), max_conn);
  return 0;
}

int cmd_bench(const std::string& config, const std::string& out, int repeats, bool quiet) {
  const auto j = load_config(config);
  GridConfig g = j.get<GridConfig>();
  if (repeats > 0) {
    const auto first = g.seeds.empty() ? std::uint64_t{1} : g.seeds.front();
    g.seeds.clear();
    for (int i = 0; i < repeats; ++i) g.seeds.push_back(first + static_cast<std::uint64_t>(i));
  }
  fs::create_directories(out);
  const auto res = run_grid(g, out, quiet ? nullptr : &std::cerr);
  report(res, g, out);
  std::size_t failed = 0;
  for (const auto& c : res.cells) failed += !c.error.empty();
  std::cout << "wrote " << res.cells.size() << " cells to " << out;
  if (failed) std::cout << " (" << failed << " with errors)";
  std::cout << '\n';
  return failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dqpipe: data-quality driven ML pipeline"};
  app.require_subcommand(1);

  std::string config, out, source, listen, predictions;
  int repeats = 0;
  std::size_t max_conn = 0;
  bool quiet = false;

  auto* synth = app.add_subcommand("synth", "write a synthetic stream as cycle CSVs");
  synth->add_option("--config", config, "config file")->required();
  synth->add_option("--out", out, "output directory")->required();

  auto* init = app.add_subcommand("init", "build and register the initial artifacts");
  init->add_option("--config", config, "config file")->required();

  auto* run = app.add_subcommand("run", "replay a stream through the pipeline");
  run->add_option("--config", config, "config file")->required();
  run->add_option("--source", source, "cycle directory or tcp:host:port")->required();
  run->add_option("--predictions", predictions, "predictions.csv path (default: in the store)");

  auto* serve = app.add_subcommand("serve", "answer PREDICT frames on stdin or TCP");
  serve->add_option("--config", config, "config file")->required();
  serve->add_option("--listen", listen, "host:port; stdin/stdout when omitted");
  serve->add_option("--max-connections", max_conn, "exit after this many connections");

  auto* bench = app.add_subcommand("bench", "run the strategy x threshold grid");
  bench->add_option("--config", config, "config file")->required();
  bench->add_option("--out", out, "output directory")->required();
  bench->add_option("--repeats", repeats, "number of seeds (overrides the config)");
  bench->add_flag("--quiet", quiet, "no per-cell progress");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*synth) return cmd_synth(config, out);
    if (*init) return cmd_init(config);
    if (*run) return cmd_run(config, source, predictions);
    if (*serve) return cmd_serve(config, listen, max_conn);
    if (*bench) return cmd_bench(config, out, repeats, quiet);
  } catch (const Error& e) {
    std::cerr << "dqpipe: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "dqpipe: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
