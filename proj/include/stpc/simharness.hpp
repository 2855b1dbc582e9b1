#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "stpc/net.hpp"

namespace stpc::sim {

// Discrete-time LTI plant x+ = A x + B u, y = C x, with an optional one-step
// input delay and measurements quantized onto Q_{ky,ly}.
struct PlantSpec {
  Eigen::MatrixXd a, b, c;
  Eigen::VectorXd x0;
  int delay = 1;  // 0 or 1 steps
  unsigned ky = 18, ly = 9;
};

struct PlantState {
  Eigen::VectorXd x;
  Eigen::VectorXd pending_u;  // input awaiting application (delay == 1)
};

PlantState plant_init(const PlantSpec& spec);
// Quantized measurement of the current state.
FixedMatrix plant_measure(const PlantSpec& spec, const PlantState& state);
// Advances the state under the commanded input (applied one step late when
// delay == 1) and returns the next measurement.
FixedMatrix plant_step(const PlantSpec& spec, PlantState& state, const Eigen::VectorXd& u);

// The encoded controller matrices and the overflow guard used by both the
// exact-integer reference and the trajectory audits.
struct EncodedController {
  IntMatrix abar, bbar, cbar, dbar;
  unsigned ell;
  unsigned kappa;

  explicit EncodedController(const ControllerSpec& spec);
  // Abar x + Bbar y, checked against the signed kappa-bit range.
  IntMatrix state_pre_trunc(const IntMatrix& xbar, const IntMatrix& ybar) const;
  // Cbar x + Dbar y (2*ell fractional bits), checked likewise.
  IntMatrix input(const IntMatrix& xbar, const IntMatrix& ybar) const;
};

// Exact-integer reference controller: the encoded recursion with the
// truncation error identically zero.
class IntRefController {
 public:
  explicit IntRefController(const ControllerSpec& spec);
  // Takes the measurement encoded at ell; returns ubar with 2*ell fractional bits.
  IntMatrix step(const IntMatrix& ybar);
  const IntMatrix& state() const { return xbar_; }
  const EncodedController& encoded() const { return enc_; }

 private:
  EncodedController enc_;
  IntMatrix xbar_;
};

// Double-precision reference of the real-valued recursion.
class RealRefController {
 public:
  explicit RealRefController(const ControllerSpec& spec);
  Eigen::VectorXd step(const Eigen::VectorXd& y);
  const Eigen::VectorXd& state() const { return x_; }

 private:
  Eigen::MatrixXd a_, b_, c_, d_;
  Eigen::VectorXd x_;
};

Eigen::MatrixXd to_real(const FixedMatrix& m);

struct StepRecord {
  std::uint64_t step;
  FixedMatrix y;
  FixedMatrix u_enc;                   // encrypted path, 2*ell fractional bits
  FixedMatrix u_ref;                   // exact-integer reference, same encoding
  double rtt_ms;
  std::optional<IntMatrix> state_audit;  // reconstructed encoded state (test mode)
};

struct RunLog {
  std::vector<StepRecord> records;
};

enum class LoopMode { kInProcess, kNetworked };

struct LoopOptions {
  std::uint64_t steps = 0;
  std::uint64_t seed = 0;
  bool audit = false;  // in-process only: reconstruct and check the state law
  unsigned period_ms = 0;
  net::Endpoint party0{}, party1{};  // networked mode
  int timeout_ms = 5000;
  std::size_t prefetch = 0;  // networked mode: randomness bundles staged ahead
  std::ostream* client_trace = nullptr;
  std::ostream* party0_trace = nullptr;  // in-process only
  std::ostream* party1_trace = nullptr;  // in-process only
};

RunLog run_closed_loop(LoopMode mode, const ControllerSpec& cspec, const PlantSpec& plant,
                       const LoopOptions& opt);

struct BenchRow {
  std::string protocol;  // "mult" or "trunc"
  std::size_t dim;
  double min_ms, mean_ms, max_ms, ci99_lo, ci99_hi;
};

struct BenchOptions {
  SessionParams params;  // q, ell, lambda drive the instances; n/m/p only gate the handshake
  std::uint64_t seed = 1;
  LoopMode mode = LoopMode::kInProcess;
  net::Endpoint party0{}, party1{};
  int timeout_ms = 10000;
};

// Runs both subprotocols over the dimension grid, reps times each; Mult uses
// operand shapes (d x d) * (d x 1), Trunc a d-vector. Timings are reported,
// never asserted against any external figure.
std::vector<BenchRow> bench_subprotocols(const std::vector<std::size_t>& dims, std::size_t reps,
                                         const BenchOptions& opt);

std::string bench_to_csv(const std::vector<BenchRow>& rows);
std::vector<BenchRow> parse_bench_csv(const std::string& csv);

// Two-sided Student-t critical value at 99% confidence for n samples.
double t_crit_99(std::size_t n);

}  // namespace stpc::sim
