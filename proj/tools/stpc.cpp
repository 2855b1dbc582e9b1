// Command-line front end: closed-loop runs, the subprotocol benchmark, the
// modulus sizing calculator, config generation, and the party/client daemons.

#include <CLI11.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

#include "stpc/config.hpp"

namespace {

using namespace stpc;

std::string self_path() {
  char buf[4096];
  ssize_t n = ::readlink("/proc/self/exe", buf, sizeof(buf) - 1);
  if (n <= 0) throw std::runtime_error("cannot resolve own executable path");
  buf[n] = 0;
  return buf;
}

pid_t spawn(const std::vector<std::string>& argv) {
  std::vector<char*> cargv;
  for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
  cargv.push_back(nullptr);
  pid_t pid = ::fork();
  if (pid < 0) throw std::runtime_error("fork failed");
  if (pid == 0) {
    ::execv(cargv[0], cargv.data());
    std::perror("execv");
    ::_exit(127);
  }
  return pid;
}

std::uint16_t wait_for_port(const std::string& port_file, int timeout_ms) {
  const auto deadline =
      std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
  while (std::chrono::steady_clock::now() < deadline) {
    std::ifstream in(port_file);
    int port = 0;
    if (in >> port && port > 0) return static_cast<std::uint16_t>(port);
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  throw std::runtime_error("timed out waiting for " + port_file);
}

SessionConfig load_or_demo(const std::string& path, unsigned bits) {
  return path.empty() ? make_demo_config(bits) : load_config(path);
}

int cmd_run(const std::string& config_path, unsigned bits, const std::string& mode,
            std::uint64_t steps, std::uint64_t seed, int period_override, bool no_audit,
            bool spawn_local, std::string party0, std::string party1,
            const std::string& trace_client, const std::string& trace_p0,
            const std::string& trace_p1, const std::string& csv_out, std::size_t prefetch) {
  SessionConfig cfg = load_or_demo(config_path, bits);
  if (!cfg.plant) throw std::runtime_error("run: config has no plant section");

  sim::LoopOptions opt;
  opt.steps = steps;
  opt.seed = seed;
  opt.period_ms = period_override >= 0 ? static_cast<unsigned>(period_override) : cfg.period_ms;
  opt.timeout_ms = cfg.timeout_ms;
  opt.prefetch = prefetch;

  std::ofstream tc, t0, t1;
  if (!trace_client.empty()) {
    tc.open(trace_client);
    opt.client_trace = &tc;
  }

  sim::LoopMode loop_mode;
  std::vector<pid_t> children;
  std::string tmp_cfg;
  if (mode == "in-process") {
    loop_mode = sim::LoopMode::kInProcess;
    opt.audit = !no_audit;
    if (!trace_p0.empty()) {
      t0.open(trace_p0);
      opt.party0_trace = &t0;
    }
    if (!trace_p1.empty()) {
      t1.open(trace_p1);
      opt.party1_trace = &t1;
    }
  } else if (mode == "networked") {
    loop_mode = sim::LoopMode::kNetworked;
    if (spawn_local) {
      tmp_cfg = "/tmp/stpc-run-" + std::to_string(::getpid()) + ".json";
      save_config(cfg, tmp_cfg);
      const std::string exe = self_path();
      const std::string pf1 = tmp_cfg + ".p1.port";
      const std::string pf0 = tmp_cfg + ".p0.port";
      children.push_back(spawn({exe, "party", "--role", "1", "--config", tmp_cfg, "--listen",
                                "127.0.0.1:0", "--port-file", pf1}));
      std::uint16_t p1_port = wait_for_port(pf1, cfg.timeout_ms);
      children.push_back(spawn({exe, "party", "--role", "0", "--config", tmp_cfg, "--listen",
                                "127.0.0.1:0", "--peer", "127.0.0.1:" + std::to_string(p1_port),
                                "--port-file", pf0}));
      std::uint16_t p0_port = wait_for_port(pf0, cfg.timeout_ms);
      party0 = "127.0.0.1:" + std::to_string(p0_port);
      party1 = "127.0.0.1:" + std::to_string(p1_port);
    }
    opt.party0 = net::parse_endpoint(party0.empty() ? cfg.party0_addr : party0);
    opt.party1 = net::parse_endpoint(party1.empty() ? cfg.party1_addr : party1);
  } else {
    throw std::runtime_error("run: mode must be in-process or networked");
  }

  int rc = 0;
  try {
    sim::RunLog log = sim::run_closed_loop(loop_mode, cfg.controller, *cfg.plant, opt);
    double max_rtt = 0, sum_rtt = 0, max_dev = 0;
    for (const auto& rec : log.records) {
      max_rtt = std::max(max_rtt, rec.rtt_ms);
      sum_rtt += rec.rtt_ms;
      for (std::size_t r = 0; r < rec.u_enc.rows(); ++r)
        max_dev = std::max(max_dev, std::abs(rec.u_enc.value_as_double(r, 0) -
                                             rec.u_ref.value_as_double(r, 0)));
    }
    if (!csv_out.empty()) {
      std::ofstream os(csv_out);
      os << "step,y,u,u_ref,rtt_ms\n";
      for (const auto& rec : log.records) {
        os << rec.step << ",\"";
        for (std::size_t r = 0; r < rec.y.rows(); ++r)
          os << (r ? ";" : "") << rec.y.decimal(r, 0);
        os << "\",\"";
        for (std::size_t r = 0; r < rec.u_enc.rows(); ++r)
          os << (r ? ";" : "") << rec.u_enc.decimal(r, 0);
        os << "\",\"";
        for (std::size_t r = 0; r < rec.u_ref.rows(); ++r)
          os << (r ? ";" : "") << rec.u_ref.decimal(r, 0);
        os << "\"," << rec.rtt_ms << "\n";
      }
    }
    std::cout << "steps completed: " << log.records.size() << "\n";
    if (!log.records.empty()) {
      std::cout << "round-trip ms: mean " << sum_rtt / log.records.size() << ", max " << max_rtt
                << "\n";
      std::cout << "max |u_enc - u_ref|: " << max_dev << "\n";
      const auto& last = log.records.back();
      std::cout << "final measurement:";
      for (std::size_t r = 0; r < last.y.rows(); ++r) std::cout << " " << last.y.decimal(r, 0);
      std::cout << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << "\n";
    rc = 1;
  }
  for (pid_t pid : children) {
    int status = 0;
    ::waitpid(pid, &status, 0);
    if (rc == 0 && (!WIFEXITED(status) || WEXITSTATUS(status) != 0)) rc = 1;
  }
  if (!tmp_cfg.empty()) {
    std::remove(tmp_cfg.c_str());
    std::remove((tmp_cfg + ".p0.port").c_str());
    std::remove((tmp_cfg + ".p1.port").c_str());
  }
  return rc;
}

int cmd_party(int role, const std::string& config_path, unsigned bits,
              const std::string& listen, const std::string& peer, const std::string& trace_path,
              const std::string& port_file, int timeout_ms) {
  SessionConfig cfg = load_or_demo(config_path, bits);
  net::Endpoint lst = net::parse_endpoint(listen);
  net::PartyConfig pcfg{role,
                        cfg.controller.session_params(),
                        lst.host,
                        lst.port,
                        peer.empty() ? std::nullopt
                                     : std::make_optional(net::parse_endpoint(peer)),
                        timeout_ms > 0 ? timeout_ms : static_cast<int>(cfg.timeout_ms),
                        nullptr,
                        nullptr,
                        nullptr};
  std::ofstream trace;
  if (!trace_path.empty()) {
    trace.open(trace_path);
    pcfg.trace = &trace;
  }
  pcfg.on_listening = [&](std::uint16_t port) {
    std::cout << "LISTENING " << port << std::endl;
    if (!port_file.empty()) {
      std::ofstream pf(port_file);
      pf << port << "\n";
    }
  };
  std::uint64_t steps = net::serve_party(std::move(pcfg));
  std::cout << "session closed after " << steps << " steps\n";
  return 0;
}

int cmd_bench(const std::string& config_path, unsigned bits, const std::string& dims_str,
              std::size_t reps, const std::string& mode, std::string party0, std::string party1,
              std::uint64_t seed, const std::string& out_path, bool spawn_local, int timeout_ms) {
  SessionConfig cfg = load_or_demo(config_path, bits);
  sim::BenchOptions opt{cfg.controller.session_params(), seed, sim::LoopMode::kInProcess,
                        {}, {}, timeout_ms};

  std::vector<std::size_t> dims;
  std::stringstream ss(dims_str);
  std::string tok;
  while (std::getline(ss, tok, ',')) dims.push_back(std::stoul(tok));

  std::vector<pid_t> children;
  std::string tmp_cfg;
  if (mode == "networked") {
    opt.mode = sim::LoopMode::kNetworked;
    if (spawn_local) {
      tmp_cfg = "/tmp/stpc-bench-" + std::to_string(::getpid()) + ".json";
      save_config(cfg, tmp_cfg);
      const std::string exe = self_path();
      const std::string pf1 = tmp_cfg + ".p1.port";
      const std::string pf0 = tmp_cfg + ".p0.port";
      children.push_back(spawn({exe, "party", "--role", "1", "--config", tmp_cfg, "--listen",
                                "127.0.0.1:0", "--port-file", pf1, "--timeout",
                                std::to_string(timeout_ms)}));
      std::uint16_t p1_port = wait_for_port(pf1, timeout_ms);
      children.push_back(spawn({exe, "party", "--role", "0", "--config", tmp_cfg, "--listen",
                                "127.0.0.1:0", "--peer", "127.0.0.1:" + std::to_string(p1_port),
                                "--port-file", pf0, "--timeout", std::to_string(timeout_ms)}));
      std::uint16_t p0_port = wait_for_port(pf0, timeout_ms);
      party0 = "127.0.0.1:" + std::to_string(p0_port);
      party1 = "127.0.0.1:" + std::to_string(p1_port);
    }
    opt.party0 = net::parse_endpoint(party0.empty() ? cfg.party0_addr : party0);
    opt.party1 = net::parse_endpoint(party1.empty() ? cfg.party1_addr : party1);
  } else if (mode != "in-process") {
    throw std::runtime_error("bench: mode must be in-process or networked");
  }

  int rc = 0;
  try {
    auto rows = sim::bench_subprotocols(dims, reps, opt);
    std::string csv = sim::bench_to_csv(rows);
    if (out_path.empty()) {
      std::cout << csv;
    } else {
      std::ofstream os(out_path);
      os << csv;
      std::cout << "wrote " << rows.size() << " rows to " << out_path << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "bench failed: " << e.what() << "\n";
    rc = 1;
  }
  for (pid_t pid : children) {
    int status = 0;
    ::waitpid(pid, &status, 0);
    if (rc == 0 && (!WIFEXITED(status) || WEXITSTATUS(status) != 0)) rc = 1;
  }
  if (!tmp_cfg.empty()) {
    std::remove(tmp_cfg.c_str());
    std::remove((tmp_cfg + ".p0.port").c_str());
    std::remove((tmp_cfg + ".p1.port").c_str());
  }
  return rc;
}

int cmd_size_modulus(unsigned n, unsigned p, unsigned k, unsigned ell, unsigned lambda,
                     const std::string& c_str, const std::string& gamma_str,
                     const std::string& config_path, const std::string& gamma_hint) {
  mpq_class c, gamma;
  if (!config_path.empty()) {
    SessionConfig cfg = load_config(config_path);
    std::optional<double> gh;
    if (!gamma_hint.empty()) gh = std::stod(gamma_hint);
    ContractionCert cert = estimate_contraction(sim::to_real(cfg.controller.a), gh);
    std::cout << "estimated contraction: c = " << cert.c << ", gamma = " << cert.gamma
              << " (verified to horizon " << cert.horizon << ")\n";
    c = mpq_class(cert.c);
    gamma = mpq_class(cert.gamma);
    n = cfg.controller.n();
    p = cfg.controller.p();
    k = cfg.controller.k;
    ell = cfg.controller.ell;
    lambda = cfg.controller.lambda;
  } else {
    c = parse_exact_decimal(c_str);
    gamma = parse_exact_decimal(gamma_str);
  }
  unsigned bits = required_modulus_bits(n, p, k, ell, lambda, c, gamma);
  unsigned aligned = default_modulus_bits(bits);
  std::cout << "required log2(q): " << bits << " bits\n";
  std::cout << "byte-aligned length: " << aligned << " bits\n";
  Modulus q = default_modulus(aligned);
  std::cout << "default prime (" << q.bit_len() << " bits): 0x" << q.value().get_str(16) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"secure two-party controller computation runtime"};
  app.require_subcommand(1);

  std::string config_path, mode = "in-process", party0, party1;
  std::string trace_client, trace_p0, trace_p1, csv_out, out_path, port_file, peer;
  std::string listen = "127.0.0.1:0";
  std::string dims_str = "10,20,30,40,50,60,70,80,90,100";
  std::string c_str = "1", gamma_str = "0.5", gamma_hint;
  unsigned bits = 256;
  std::uint64_t steps = 500, seed = 0;
  std::size_t reps = 100;
  int period_override = -1, role = 0, timeout_ms = 5000;
  std::size_t prefetch = 0;
  unsigned n = 1, p = 1, k = 4, ell = 2, lambda = 1;
  bool no_audit = false, spawn_local = false;

  auto* run = app.add_subcommand("run", "closed-loop simulation against the configured plant");
  run->add_option("--config", config_path, "session config JSON (default: built-in demo)");
  run->add_option("--bits", bits, "modulus bits for the built-in demo config");
  run->add_option("--mode", mode, "in-process | networked")->capture_default_str();
  run->add_option("--steps", steps)->capture_default_str();
  run->add_option("--seed", seed, "client randomness seed (test/replay use)");
  run->add_option("--period", period_override, "sampling period override, ms");
  run->add_flag("--no-audit", no_audit, "skip the in-process trajectory audit");
  run->add_flag("--spawn-local", spawn_local, "networked mode: fork the two parties locally");
  run->add_option("--party0", party0, "party 0 endpoint (networked)");
  run->add_option("--party1", party1, "party 1 endpoint (networked)");
  run->add_option("--trace-client", trace_client, "write the client step trace here");
  run->add_option("--trace-party0", trace_p0, "in-process: party 0 state trace");
  run->add_option("--trace-party1", trace_p1, "in-process: party 1 state trace");
  run->add_option("--csv", csv_out, "write the run log CSV here");
  run->add_option("--prefetch", prefetch,
                  "networked mode: randomness bundles staged ahead of the loop");

  auto* party = app.add_subcommand("party", "run one computing party");
  party->add_option("--role", role, "0 or 1")->required();
  party->add_option("--config", config_path, "session config JSON (default: built-in demo)");
  party->add_option("--bits", bits, "modulus bits for the built-in demo config");
  party->add_option("--listen", listen, "listen endpoint")->capture_default_str();
  party->add_option("--peer", peer, "party 1 endpoint (required for role 0)");
  party->add_option("--trace", trace_p0, "write the per-step state share trace here");
  party->add_option("--port-file", port_file, "write the bound port here");
  party->add_option("--timeout", timeout_ms, "receive timeout, ms");

  auto* bench = app.add_subcommand("bench", "subprotocol round-trip benchmark");
  bench->add_option("--config", config_path, "session config JSON (default: built-in demo)");
  bench->add_option("--bits", bits, "modulus bits for the built-in demo config");
  bench->add_option("--dims", dims_str, "comma-separated dimensions")->capture_default_str();
  bench->add_option("--reps", reps)->capture_default_str();
  bench->add_option("--mode", mode, "in-process | networked")->capture_default_str();
  bench->add_flag("--spawn-local", spawn_local, "networked mode: fork the two parties locally");
  bench->add_option("--party0", party0);
  bench->add_option("--party1", party1);
  bench->add_option("--seed", seed, "instance generation seed");
  bench->add_option("--out", out_path, "CSV output path (default: stdout)");
  bench->add_option("--timeout", timeout_ms, "receive timeout, ms");

  auto* size = app.add_subcommand("size-modulus", "modulus bit-length calculator");
  size->add_option("--n", n)->capture_default_str();
  size->add_option("--p", p)->capture_default_str();
  size->add_option("--k", k)->capture_default_str();
  size->add_option("--ell", ell)->capture_default_str();
  size->add_option("--lambda", lambda)->capture_default_str();
  size->add_option("--c", c_str, "contraction constant, decimal")->capture_default_str();
  size->add_option("--gamma", gamma_str, "contraction rate, decimal")->capture_default_str();
  size->add_option("--config", config_path, "estimate c and gamma from this config's A matrix");
  size->add_option("--gamma-hint", gamma_hint, "gamma to use with --config estimation");

  auto* gen = app.add_subcommand("gen-config", "write the demo session config");
  std::string gen_out = "stpc-config.json";
  gen->add_option("--out", gen_out)->capture_default_str();
  gen->add_option("--bits", bits, "modulus bits (248 or 256)")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed())
      return cmd_run(config_path, bits, mode, steps, seed, period_override, no_audit,
                     spawn_local, party0, party1, trace_client, trace_p0, trace_p1, csv_out,
                     prefetch);
    if (party->parsed())
      return cmd_party(role, config_path, bits, listen, peer, trace_p0, port_file, timeout_ms);
    if (bench->parsed())
      return cmd_bench(config_path, bits, dims_str, reps, mode, party0, party1, seed, out_path,
                       spawn_local, timeout_ms);
    if (size->parsed())
      return cmd_size_modulus(n, p, k, ell, lambda, c_str, gamma_str, config_path, gamma_hint);
    if (gen->parsed()) {
      SessionConfig cfg = make_demo_config(bits);
      save_config(cfg, gen_out);
      std::cout << "wrote " << gen_out << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
