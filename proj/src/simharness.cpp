#include "stpc/simharness.hpp"

#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "stpc/protocols.hpp"

namespace stpc::sim {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace

PlantState plant_init(const PlantSpec& spec) {
  if (spec.delay != 0 && spec.delay != 1)
    throw std::invalid_argument("PlantSpec: delay must be 0 or 1");
  if (spec.a.rows() != spec.a.cols() || spec.b.rows() != spec.a.rows() ||
      spec.c.cols() != spec.a.rows() || spec.x0.size() != spec.a.rows())
    throw std::invalid_argument("PlantSpec: dimension mismatch");
  return PlantState{spec.x0, Eigen::VectorXd::Zero(spec.b.cols())};
}

FixedMatrix plant_measure(const PlantSpec& spec, const PlantState& state) {
  Eigen::VectorXd y = spec.c * state.x;
  std::vector<BigInt> scaled;
  scaled.reserve(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i)
    scaled.push_back(quantize_scaled(y(i), spec.ky, spec.ly));
  return FixedMatrix::from_scaled({spec.ky, spec.ly}, y.size(), 1, std::move(scaled));
}

FixedMatrix plant_step(const PlantSpec& spec, PlantState& state, const Eigen::VectorXd& u) {
  if (u.size() != spec.b.cols()) throw std::invalid_argument("plant_step: input dimension");
  const Eigen::VectorXd& applied = spec.delay == 1 ? state.pending_u : u;
  state.x = spec.a * state.x + spec.b * applied;
  if (spec.delay == 1) state.pending_u = u;
  return plant_measure(spec, state);
}

EncodedController::EncodedController(const ControllerSpec& spec)
    : abar(encode(spec.a, spec.ell)),
      bbar(encode(spec.b, spec.ell)),
      cbar(encode(spec.c, spec.ell)),
      dbar(encode(spec.d, spec.ell)),
      ell(spec.ell),
      kappa(trunc_kappa(spec.q, spec.lambda, spec.ell)) {}

namespace {

void check_kappa_range(const IntMatrix& m, unsigned kappa, const char* what) {
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c)
      if (!in_signed_range(m.at(r, c), kappa))
        throw std::runtime_error(std::string(what) +
                                 ": encoded value outside the kappa-bit range "
                                 "(modulus sizing violated)");
}

}  // namespace

IntMatrix EncodedController::state_pre_trunc(const IntMatrix& xbar, const IntMatrix& ybar) const {
  IntMatrix v = abar.mul(xbar).add(bbar.mul(ybar));
  check_kappa_range(v, kappa, "state update");
  return v;
}

IntMatrix EncodedController::input(const IntMatrix& xbar, const IntMatrix& ybar) const {
  IntMatrix v = cbar.mul(xbar).add(dbar.mul(ybar));
  check_kappa_range(v, kappa, "control input");
  return v;
}

IntRefController::IntRefController(const ControllerSpec& spec)
    : enc_(spec), xbar_(encode(spec.x0, spec.ell)) {}

IntMatrix IntRefController::step(const IntMatrix& ybar) {
  IntMatrix u = enc_.input(xbar_, ybar);
  xbar_ = enc_.state_pre_trunc(xbar_, ybar).round_div_pow2(enc_.ell);
  return u;
}

Eigen::MatrixXd to_real(const FixedMatrix& m) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) = m.value_as_double(r, c);
  return out;
}

RealRefController::RealRefController(const ControllerSpec& spec)
    : a_(to_real(spec.a)), b_(to_real(spec.b)), c_(to_real(spec.c)), d_(to_real(spec.d)),
      x_(to_real(spec.x0)) {}

Eigen::VectorXd RealRefController::step(const Eigen::VectorXd& y) {
  Eigen::VectorXd u = c_ * x_ + d_ * y;
  x_ = a_ * x_ + b_ * y;
  return u;
}

namespace {

Eigen::VectorXd fixed_to_vector(const FixedMatrix& m) {
  Eigen::VectorXd v(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) v(r) = m.value_as_double(r, 0);
  return v;
}

void write_client_trace(std::ostream* os, std::uint64_t t, const FixedMatrix& u,
                        const ZqMatrix& share0, const ZqMatrix& share1) {
  if (!os) return;
  std::string u_str;
  for (std::size_t r = 0; r < u.rows(); ++r) {
    if (r) u_str += ';';
    u_str += u.decimal(r, 0);
  }
  *os << t << "," << u_str << "," << net::to_hex(share0.to_bytes()) << ","
      << net::to_hex(share1.to_bytes()) << "\n" << std::flush;
}

// The in-process trajectory-law audit: x(t+1) minus the rounded update must
// land in {-1, 0, 1}^n and the input must match the plaintext value exactly.
void audit_step(const EncodedController& enc, const IntMatrix& x_before,
                const IntMatrix& x_after, const IntMatrix& ybar, const ZqMatrix& ubar_recon) {
  IntMatrix expect_u = enc.input(x_before, ybar);
  if (IntMatrix::from_zq(ubar_recon) != expect_u)
    throw std::runtime_error("audit: control input differs from the plaintext evaluation");
  IntMatrix rounded = enc.state_pre_trunc(x_before, ybar).round_div_pow2(enc.ell);
  for (std::size_t r = 0; r < x_after.rows(); ++r) {
    BigInt w = x_after.at(r, 0) - rounded.at(r, 0);
    if (w < -1 || w > 1)
      throw std::runtime_error("audit: state deviates from the rounded update by more than 1");
  }
}

}  // namespace

RunLog run_closed_loop(LoopMode mode, const ControllerSpec& cspec, const PlantSpec& plant,
                       const LoopOptions& opt) {
  if (plant.b.cols() != static_cast<Eigen::Index>(cspec.m()) ||
      plant.c.rows() != static_cast<Eigen::Index>(cspec.p()))
    throw std::invalid_argument("run_closed_loop: plant and controller dimensions disagree");

  RunLog log;
  IntRefController ref(cspec);
  EncodedController enc(cspec);
  PlantState pstate = plant_init(plant);

  if (mode == LoopMode::kInProcess) {
    InprocessSession session(cspec, Csprng(opt.seed));
    double drift_bound = 0;
    if (opt.audit) {
      ContractionCert cert = estimate_contraction(to_real(cspec.a));
      drift_bound = 1.5 * std::sqrt(double(cspec.n())) * cert.c / (1.0 - cert.gamma);
    }
    FixedMatrix y = plant_measure(plant, pstate);
    for (std::uint64_t t = 0; t < opt.steps; ++t) {
      IntMatrix ybar = encode(y, cspec.ell);
      std::optional<IntMatrix> x_before;
      if (opt.audit) x_before = session.reconstruct_state();
      const auto t0 = Clock::now();
      FixedMatrix u = session.step(y);
      const double rtt = ms_since(t0);
      IntMatrix u_ref = ref.step(ybar);
      std::optional<IntMatrix> x_after;
      if (opt.audit) {
        x_after = session.reconstruct_state();
        const auto& shares = *session.last_input_shares();
        audit_step(enc, *x_before, *x_after, ybar, reconst(make_pair(shares[0], shares[1])));
        for (std::size_t r = 0; r < x_after->rows(); ++r) {
          BigInt d = BigInt(abs(x_after->at(r, 0) - ref.state().at(r, 0)));
          if (d.get_d() > drift_bound)
            throw std::runtime_error("audit: drift from the exact-integer reference exceeds "
                                     "the certificate bound");
        }
      }
      if (opt.client_trace) {
        const auto& shares = *session.last_input_shares();
        write_client_trace(opt.client_trace, t, u, shares[0], shares[1]);
      }
      if (opt.party0_trace)
        *opt.party0_trace << t << "," << net::to_hex(session.party(0).state_share().to_bytes())
                          << "\n" << std::flush;
      if (opt.party1_trace)
        *opt.party1_trace << t << "," << net::to_hex(session.party(1).state_share().to_bytes())
                          << "\n" << std::flush;
      log.records.push_back(StepRecord{t, y, u, decode(u_ref, 2 * cspec.ell), rtt,
                                       std::move(x_after)});
      y = plant_step(plant, pstate, fixed_to_vector(u));
    }
    return log;
  }

  // Networked: this process is the client; the parties run elsewhere.
  if (opt.audit) throw std::invalid_argument("run_closed_loop: audit requires in-process mode");
  std::vector<FixedMatrix> u_refs;
  std::vector<FixedMatrix> ys;
  net::ClientConfig ccfg{cspec,
                         opt.party0,
                         opt.party1,
                         opt.timeout_ms,
                         opt.period_ms,
                         net::TimeoutPolicy::kAbort,
                         opt.client_trace,
                         nullptr,
                         opt.prefetch};
  auto source = [&](std::uint64_t t, const FixedMatrix* last_u) -> std::optional<FixedMatrix> {
    if (t >= opt.steps) return std::nullopt;
    FixedMatrix y = t == 0 ? plant_measure(plant, pstate)
                           : plant_step(plant, pstate, fixed_to_vector(*last_u));
    u_refs.push_back(decode(ref.step(encode(y, cspec.ell)), 2 * cspec.ell));
    ys.push_back(y);
    return y;
  };
  auto results = net::client_session(ccfg, Csprng(opt.seed), source);
  for (std::size_t i = 0; i < results.size(); ++i)
    log.records.push_back(StepRecord{results[i].step, ys[i], results[i].u, u_refs[i],
                                     results[i].rtt_ms, std::nullopt});
  return log;
}

double t_crit_99(std::size_t n) {
  if (n < 2) throw std::invalid_argument("t_crit_99: need at least 2 samples");
  const std::size_t df = n - 1;
  struct Entry {
    unsigned df;
    double t;
  };
  static const Entry table[] = {
      {1, 63.657}, {2, 9.925}, {3, 5.841},  {4, 4.604},  {5, 4.032},  {6, 3.707},  {7, 3.499},
      {8, 3.355},  {9, 3.250}, {10, 3.169}, {11, 3.106}, {12, 3.055}, {13, 3.012}, {14, 2.977},
      {15, 2.947}, {16, 2.921}, {17, 2.898}, {18, 2.878}, {19, 2.861}, {20, 2.845}, {21, 2.831},
      {22, 2.819}, {23, 2.807}, {24, 2.797}, {25, 2.787}, {26, 2.779}, {27, 2.771}, {28, 2.763},
      {29, 2.756}, {30, 2.750}, {40, 2.704}, {50, 2.678}, {60, 2.660}, {80, 2.639}, {100, 2.626},
      {120, 2.617}};
  if (df <= 30) return table[df - 1].t;
  const double inf_t = 2.576;
  const Entry* lo = nullptr;
  const Entry* hi = nullptr;
  for (const auto& e : table) {
    if (e.df <= df) lo = &e;
    if (e.df >= df) {
      hi = &e;
      break;
    }
  }
  if (!hi) {
    // Beyond the table: interpolate toward the normal quantile in 1/df.
    const Entry& last = table[std::size(table) - 1];
    double f = (1.0 / df) / (1.0 / last.df);
    return inf_t + f * (last.t - inf_t);
  }
  if (lo->df == hi->df) return lo->t;
  double x = 1.0 / df, x0 = 1.0 / lo->df, x1 = 1.0 / hi->df;
  return hi->t + (x - x1) / (x0 - x1) * (lo->t - hi->t);
}

namespace {

BenchRow summarize(const std::string& protocol, std::size_t dim, std::vector<double> samples) {
  double mn = samples[0], mx = samples[0], sum = 0;
  for (double s : samples) {
    mn = std::min(mn, s);
    mx = std::max(mx, s);
    sum += s;
  }
  const double mean = sum / samples.size();
  double var = 0;
  for (double s : samples) var += (s - mean) * (s - mean);
  var /= samples.size() - 1;
  const double half = t_crit_99(samples.size()) * std::sqrt(var / samples.size());
  return BenchRow{protocol, dim, mn, mean, mx, mean - half, mean + half};
}

struct BenchContext {
  const BenchOptions& opt;
  Csprng rng;
  std::optional<net::TcpStream> p0, p1;
  std::uint64_t counter = 0;

  explicit BenchContext(const BenchOptions& o) : opt(o), rng(o.seed) {
    if (opt.mode != LoopMode::kNetworked) return;
    p0 = net::TcpStream::connect(opt.party0.host, opt.party0.port, opt.timeout_ms);
    p1 = net::TcpStream::connect(opt.party1.host, opt.party1.port, opt.timeout_ms);
    p0->set_recv_timeout(opt.timeout_ms);
    p1->set_recv_timeout(opt.timeout_ms);
    auto hello = encode_session_header(net::SessionHeader{opt.params, net::kRoleClient});
    net::write_frame(*p0, net::Frame{net::MsgType::kHello, 0, hello});
    net::write_frame(*p1, net::Frame{net::MsgType::kHello, 0, hello});
    for (auto* s : {&*p0, &*p1}) {
      net::Frame f = net::read_frame(*s);
      if (f.type != net::MsgType::kAck) throw net::NetError("bench: party did not acknowledge");
    }
  }

  ~BenchContext() {
    try {
      if (p0) net::write_frame(*p0, net::Frame{net::MsgType::kClose, 0, {}});
      if (p1) net::write_frame(*p1, net::Frame{net::MsgType::kClose, 0, {}});
    } catch (...) {
      // Session teardown; the sockets close regardless.
    }
  }

  ZqMatrix run_networked(net::MsgType type, const std::vector<std::uint8_t>& pay0,
                         const std::vector<std::uint8_t>& pay1, double& out_ms) {
    const std::uint64_t step = counter++;
    const auto t0 = Clock::now();
    net::write_frame(*p0, net::Frame{type, step, pay0});
    net::write_frame(*p1, net::Frame{type, step, pay1});
    net::Frame r0 = net::read_frame(*p0);
    net::Frame r1 = net::read_frame(*p1);
    out_ms = ms_since(t0);
    if (r0.type != net::MsgType::kBenchOutput || r1.type != net::MsgType::kBenchOutput ||
        r0.step != step || r1.step != step)
      throw net::NetError("bench: unexpected reply");
    std::size_t off0 = 0, off1 = 0;
    ZqMatrix z0 = ZqMatrix::from_bytes(opt.params.q, r0.payload, off0);
    ZqMatrix z1 = ZqMatrix::from_bytes(opt.params.q, r1.payload, off1);
    return z0.add(z1);
  }

  double run_mult(std::size_t d) {
    const Modulus& q = opt.params.q;
    ZqMatrix x = sample_uniform(q, d, d, rng);
    ZqMatrix y = sample_uniform(q, d, 1, rng);
    MatrixTriple triple = gen_triple(q, d, d, 1, rng);
    SharePair xs = share(x, rng);
    SharePair ys = share(y, rng);
    ZqMatrix expect = x.mul(y);
    double ms = 0;
    ZqMatrix z = expect;  // placeholder shape
    if (opt.mode == LoopMode::kInProcess) {
      const auto t0 = Clock::now();
      SharePair zs = protocols::run_inprocess_mult(xs, ys, triple);
      ms = ms_since(t0);
      z = reconst(zs);
    } else {
      net::BenchMultMsg m0{xs.value_of(0), ys.value_of(0), triple_for(triple, 0)};
      net::BenchMultMsg m1{xs.value_of(1), ys.value_of(1), triple_for(triple, 1)};
      z = run_networked(net::MsgType::kBenchMult, net::encode_bench_mult(m0),
                        net::encode_bench_mult(m1), ms);
    }
    if (z != expect) throw std::runtime_error("bench: multiplication output mismatch");
    return ms;
  }

  double run_trunc(std::size_t d) {
    const Modulus& q = opt.params.q;
    const unsigned kappa = trunc_kappa(q, opt.params.lambda, opt.params.ell);
    ZqMatrix x(q, d, 1);
    IntMatrix x_plain(d, 1);
    for (std::size_t i = 0; i < d; ++i) {
      BigInt v = sample_int_bits(kappa, rng);
      x_plain.set(i, 0, v);
      x.set(i, 0, v);
    }
    TruncPair pair = gen_trunc_pair(q, d, 1, opt.params.ell, opt.params.lambda, rng);
    SharePair xs = share(x, rng);
    double ms = 0;
    ZqMatrix z = x;  // placeholder shape
    if (opt.mode == LoopMode::kInProcess) {
      const auto t0 = Clock::now();
      SharePair zs = protocols::run_inprocess_trunc(xs, pair);
      ms = ms_since(t0);
      z = reconst(zs);
    } else {
      net::BenchTruncMsg m0{xs.value_of(0), trunc_for(pair, 0)};
      net::BenchTruncMsg m1{xs.value_of(1), trunc_for(pair, 1)};
      z = run_networked(net::MsgType::kBenchTrunc, net::encode_bench_trunc(m0),
                        net::encode_bench_trunc(m1), ms);
    }
    IntMatrix rounded = x_plain.round_div_pow2(opt.params.ell);
    for (std::size_t i = 0; i < d; ++i) {
      BigInt w = z.at(i, 0) - rounded.at(i, 0);
      if (w < -1 || w > 1) throw std::runtime_error("bench: truncation error outside {-1,0,1}");
    }
    return ms;
  }
};

}  // namespace

std::vector<BenchRow> bench_subprotocols(const std::vector<std::size_t>& dims, std::size_t reps,
                                         const BenchOptions& opt) {
  if (reps < 2) throw std::invalid_argument("bench_subprotocols: need reps >= 2");
  BenchContext ctx(opt);
  std::vector<BenchRow> rows;
  for (std::size_t d : dims) {
    std::vector<double> samples;
    samples.reserve(reps);
    for (std::size_t i = 0; i < reps; ++i) samples.push_back(ctx.run_mult(d));
    rows.push_back(summarize("mult", d, std::move(samples)));
  }
  for (std::size_t d : dims) {
    std::vector<double> samples;
    samples.reserve(reps);
    for (std::size_t i = 0; i < reps; ++i) samples.push_back(ctx.run_trunc(d));
    rows.push_back(summarize("trunc", d, std::move(samples)));
  }
  return rows;
}

std::string bench_to_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream os;
  os << "protocol,dim,min_ms,mean_ms,max_ms,ci99_lo,ci99_hi\n";
  os.precision(6);
  os << std::fixed;
  for (const auto& r : rows)
    os << r.protocol << "," << r.dim << "," << r.min_ms << "," << r.mean_ms << "," << r.max_ms
       << "," << r.ci99_lo << "," << r.ci99_hi << "\n";
  return os.str();
}

std::vector<BenchRow> parse_bench_csv(const std::string& csv) {
  std::istringstream is(csv);
  std::string line;
  if (!std::getline(is, line) || line != "protocol,dim,min_ms,mean_ms,max_ms,ci99_lo,ci99_hi")
    throw std::invalid_argument("parse_bench_csv: bad header");
  std::vector<BenchRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    BenchRow r;
    std::string field;
    std::getline(ls, r.protocol, ',');
    std::getline(ls, field, ',');
    r.dim = std::stoul(field);
    std::getline(ls, field, ',');
    r.min_ms = std::stod(field);
    std::getline(ls, field, ',');
    r.mean_ms = std::stod(field);
    std::getline(ls, field, ',');
    r.max_ms = std::stod(field);
    std::getline(ls, field, ',');
    r.ci99_lo = std::stod(field);
    if (!std::getline(ls, field)) throw std::invalid_argument("parse_bench_csv: short row");
    r.ci99_hi = std::stod(field);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace stpc::sim
