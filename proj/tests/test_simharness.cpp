#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "testutil.hpp"

using namespace stpc;
using namespace stpc::sim;

namespace {

PlantSpec integrator_plant(int delay) {
  PlantSpec p;
  p.a = Eigen::MatrixXd::Identity(1, 1);
  p.b = Eigen::MatrixXd::Ones(1, 1);
  p.c = Eigen::MatrixXd::Ones(1, 1);
  p.x0 = Eigen::VectorXd::Zero(1);
  p.delay = delay;
  p.ky = 18;
  p.ly = 9;
  return p;
}

}  // namespace

TEST_CASE("plant stepping") {
  SUBCASE("zero input, zero state stays at zero") {
    PlantSpec p = integrator_plant(0);
    PlantState st = plant_init(p);
    for (int t = 0; t < 5; ++t) {
      FixedMatrix y = plant_step(p, st, Eigen::VectorXd::Zero(1));
      CHECK(y.decimal(0, 0) == "0");
    }
  }

  SUBCASE("integrator without delay accumulates immediately") {
    PlantSpec p = integrator_plant(0);
    PlantState st = plant_init(p);
    for (int t = 1; t <= 5; ++t) {
      FixedMatrix y = plant_step(p, st, Eigen::VectorXd::Ones(1));
      CHECK(y.decimal(0, 0) == std::to_string(t));
    }
  }

  SUBCASE("one-step delay defers the first input by one update") {
    PlantSpec p = integrator_plant(1);
    PlantState st = plant_init(p);
    FixedMatrix y1 = plant_step(p, st, Eigen::VectorXd::Ones(1));  // applies the zero buffer
    CHECK(y1.decimal(0, 0) == "0");
    FixedMatrix y2 = plant_step(p, st, Eigen::VectorXd::Zero(1));  // applies u_0 = 1
    CHECK(y2.decimal(0, 0) == "1");
    FixedMatrix y3 = plant_step(p, st, Eigen::VectorXd::Zero(1));
    CHECK(y3.decimal(0, 0) == "1");
  }

  SUBCASE("measurements land on the quantizer grid") {
    PlantSpec p = integrator_plant(0);
    PlantState st = plant_init(p);
    FixedMatrix y = plant_step(p, st, Eigen::VectorXd::Constant(1, 0.123456789));
    // one Q_{18,9} step is 2^-9; 0.123456789 * 512 = 63.2...
    CHECK(y.decimal(0, 0) == scaled_to_decimal(BigInt(63), 9));
  }
}

TEST_CASE("exact-integer reference controller") {
  ControllerSpec spec = testutil::demo_controller(256);

  SUBCASE("zero measurements give zero inputs forever") {
    IntRefController ref(spec);
    IntMatrix zero_y(2, 1);
    for (int t = 0; t < 10; ++t) {
      IntMatrix u = ref.step(zero_y);
      CHECK(u.at(0, 0) == 0);
    }
  }

  SUBCASE("first step reproduces the direct gain") {
    IntRefController ref(spec);
    FixedMatrix y = FixedMatrix::from_decimal({18, 9}, 2, 1, {"1.0", "0.0"});
    IntMatrix u = ref.step(encode(y, spec.ell));
    CHECK(decode(u, 2 * spec.ell).decimal(0, 0) == "33.022125244140625");
  }

  SUBCASE("tracks the real-valued recursion within the drift bound") {
    IntRefController iref(spec);
    RealRefController rref(spec);
    Csprng rng(81);
    // (3/2) * 2^-32 * sqrt(3) * 2.34 / 0.41
    const double bound = 1.5 * std::ldexp(1.0, -32) * std::sqrt(3.0) * 2.34 / 0.41;
    for (int t = 0; t < 200; ++t) {
      std::vector<BigInt> scaled{sample_int_bits(18, rng), sample_int_bits(18, rng)};
      FixedMatrix y = FixedMatrix::from_scaled({18, 9}, 2, 1, scaled);
      iref.step(encode(y, spec.ell));
      rref.step(to_real(y));
      for (int i = 0; i < 3; ++i) {
        double enc_val = decode(iref.state(), spec.ell).value_as_double(i, 0);
        CHECK(std::abs(enc_val - rref.state()(i)) <= bound);
      }
    }
  }
}

TEST_CASE("encoded-controller overflow guard reports sizing violations") {
  ControllerSpec spec = testutil::demo_controller(256);
  EncodedController enc(spec);
  IntMatrix huge(3, 1);
  huge.set(0, 0, BigInt(1) << 250);  // beyond ZZ_174
  CHECK_THROWS_AS(enc.state_pre_trunc(huge, IntMatrix(2, 1)), std::runtime_error);
}

TEST_CASE("closed loop stabilizes the demo plant") {
  SessionConfig cfg = make_demo_config(256);
  LoopOptions opt;
  opt.steps = 400;
  opt.seed = 5;
  opt.audit = true;
  RunLog log = run_closed_loop(LoopMode::kInProcess, cfg.controller, *cfg.plant, opt);
  REQUIRE(log.records.size() == 400);

  // the pendulum angle starts at 2 degrees and must settle near zero
  double tail_max = 0;
  for (std::size_t t = 350; t < 400; ++t)
    tail_max = std::max(tail_max, std::abs(log.records[t].y.value_as_double(1, 0)));
  CHECK(tail_max < 0.1);

  // encrypted and reference inputs stay close throughout
  for (const auto& rec : log.records)
    CHECK(std::abs(rec.u_enc.value_as_double(0, 0) - rec.u_ref.value_as_double(0, 0)) < 1e-6);
}

TEST_CASE("zero-step run yields an empty log") {
  SessionConfig cfg = make_demo_config(256);
  LoopOptions opt;
  opt.steps = 0;
  RunLog log = run_closed_loop(LoopMode::kInProcess, cfg.controller, *cfg.plant, opt);
  CHECK(log.records.empty());
}

TEST_CASE("bench statistics and CSV round trip") {
  SessionConfig cfg = make_demo_config(256);
  BenchOptions opt{cfg.controller.session_params(), 3, LoopMode::kInProcess, {}, {}, 5000};
  auto rows = bench_subprotocols({2, 5}, 4, opt);
  REQUIRE(rows.size() == 4);  // two protocols x two dims
  for (const auto& r : rows) {
    CHECK(r.min_ms <= r.mean_ms);
    CHECK(r.mean_ms <= r.max_ms);
    CHECK(r.ci99_lo <= r.mean_ms);
    CHECK(r.mean_ms <= r.ci99_hi);
  }
  std::string csv = bench_to_csv(rows);
  auto parsed = parse_bench_csv(csv);
  REQUIRE(parsed.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(parsed[i].protocol == rows[i].protocol);
    CHECK(parsed[i].dim == rows[i].dim);
    CHECK(parsed[i].mean_ms == doctest::Approx(rows[i].mean_ms).epsilon(1e-6));
  }
  CHECK_THROWS_AS(parse_bench_csv("bogus\n1,2,3\n"), std::invalid_argument);
  CHECK_THROWS_AS(bench_subprotocols({2}, 1, opt), std::invalid_argument);
}

TEST_CASE("student-t critical values") {
  CHECK(t_crit_99(2) == doctest::Approx(63.657));
  CHECK(t_crit_99(31) == doctest::Approx(2.750));
  CHECK(t_crit_99(100) == doctest::Approx(2.6265).epsilon(0.01));
  CHECK(t_crit_99(100000) == doctest::Approx(2.576).epsilon(0.01));
  CHECK(t_crit_99(10) < t_crit_99(5));
  CHECK_THROWS_AS(t_crit_99(1), std::invalid_argument);
}

TEST_CASE("plant and controller dimensions must conform") {
  SessionConfig cfg = make_demo_config(256);
  PlantSpec bad = *cfg.plant;
  bad.c = Eigen::MatrixXd::Identity(3, 4);  // three outputs, controller expects two
  LoopOptions opt;
  opt.steps = 1;
  CHECK_THROWS_AS(run_closed_loop(LoopMode::kInProcess, cfg.controller, bad, opt),
                  std::invalid_argument);
}

TEST_CASE("config files round trip") {
  SessionConfig cfg = make_demo_config(248);
  const std::string path = "/tmp/stpc-test-config.json";
  save_config(cfg, path);
  SessionConfig back = load_config(path);
  CHECK(back.controller.q == cfg.controller.q);
  CHECK(back.controller.a == cfg.controller.a);
  CHECK(back.controller.b == cfg.controller.b);
  CHECK(back.controller.c == cfg.controller.c);
  CHECK(back.controller.d == cfg.controller.d);
  CHECK(back.controller.x0 == cfg.controller.x0);
  CHECK(back.plant.has_value());
  CHECK(back.plant->a.isApprox(cfg.plant->a));
  CHECK(back.plant->delay == 1);
  CHECK(back.party0_addr == cfg.party0_addr);
  std::remove(path.c_str());
}

TEST_CASE("config parsing rejects entries that are not exactly representable") {
  SessionConfig cfg = make_demo_config(256);
  const std::string path = "/tmp/stpc-test-badcfg.json";
  save_config(cfg, path);
  // swap one exact entry for a non-dyadic decimal
  std::ifstream in(path);
  std::stringstream buf;
  buf << in.rdbuf();
  std::string text = buf.str();
  auto pos = text.find("\"33.022125244140625\"");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, std::string("\"33.022125244140625\"").size(), "\"33.1\"");
  std::ofstream(path) << text;
  CHECK_THROWS_AS(load_config(path), std::invalid_argument);
  std::remove(path.c_str());
}
