#include "stpc/config.hpp"

#include <fstream>
#include <json.hpp>

namespace stpc {

namespace {

using nlohmann::json;

json fixed_to_json(const FixedMatrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < m.cols(); ++c) row.push_back(m.decimal(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

FixedMatrix fixed_from_json(const json& j, FixedParams params) {
  if (!j.is_array() || j.empty()) throw std::invalid_argument("config: matrix must be an array");
  const std::size_t rows = j.size();
  const std::size_t cols = j[0].size();
  std::vector<std::string> entries;
  entries.reserve(rows * cols);
  for (const auto& row : j) {
    if (row.size() != cols) throw std::invalid_argument("config: ragged matrix");
    for (const auto& e : row) entries.push_back(e.get<std::string>());
  }
  return FixedMatrix::from_decimal(params, rows, cols, entries);
}

json real_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd real_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw std::invalid_argument("config: matrix must be an array");
  Eigen::MatrixXd m(j.size(), j[0].size());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (j[r].size() != static_cast<std::size_t>(m.cols()))
      throw std::invalid_argument("config: ragged matrix");
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

}  // namespace

SessionConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  json j = json::parse(in);
  if (j.value("version", 0) != 1) throw std::invalid_argument("config: unsupported version");

  const unsigned k = j.at("k").get<unsigned>();
  const unsigned ell = j.at("ell").get<unsigned>();
  const unsigned lambda = j.at("lambda").get<unsigned>();
  Modulus q = Modulus::from_string(j.at("modulus").get<std::string>());
  FixedParams fp{k, ell};

  const json& c = j.at("controller");
  ControllerSpec spec{
      fixed_from_json(c.at("A"), fp), fixed_from_json(c.at("B"), fp),
      fixed_from_json(c.at("C"), fp), fixed_from_json(c.at("D"), fp),
      fixed_from_json(c.at("x0"), fp), k, ell, lambda, std::move(q)};
  spec.validate();

  SessionConfig cfg{std::move(spec), std::nullopt, j.value("party0", "127.0.0.1:19000"),
                    j.value("party1", "127.0.0.1:19001"), j.value("period_ms", 40u),
                    j.value("timeout_ms", 5000u)};

  if (j.contains("plant")) {
    const json& pj = j.at("plant");
    sim::PlantSpec plant{real_from_json(pj.at("A")), real_from_json(pj.at("B")),
                         real_from_json(pj.at("C")),
                         Eigen::VectorXd(real_from_json(pj.at("x0"))),
                         pj.value("delay", 1), pj.value("ky", 18u), pj.value("ly", 9u)};
    cfg.plant = std::move(plant);
  }
  return cfg;
}

void save_config(const SessionConfig& cfg, const std::string& path) {
  const ControllerSpec& s = cfg.controller;
  json j;
  j["version"] = 1;
  j["modulus"] = "0x" + s.q.value().get_str(16);
  j["n"] = s.n();
  j["m"] = s.m();
  j["p"] = s.p();
  j["k"] = s.k;
  j["ell"] = s.ell;
  j["lambda"] = s.lambda;
  j["controller"] = {{"A", fixed_to_json(s.a)},  {"B", fixed_to_json(s.b)},
                     {"C", fixed_to_json(s.c)},  {"D", fixed_to_json(s.d)},
                     {"x0", fixed_to_json(s.x0)}};
  j["party0"] = cfg.party0_addr;
  j["party1"] = cfg.party1_addr;
  j["period_ms"] = cfg.period_ms;
  j["timeout_ms"] = cfg.timeout_ms;
  if (cfg.plant) {
    const sim::PlantSpec& p = *cfg.plant;
    j["plant"] = {{"A", real_to_json(p.a)},
                  {"B", real_to_json(p.b)},
                  {"C", real_to_json(p.c)},
                  {"x0", real_to_json(p.x0)},
                  {"delay", p.delay},
                  {"ky", p.ky},
                  {"ly", p.ly},
                  {"note", "synthetic demo plant; not data from any physical system"}};
  }
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("config: cannot write " + path);
  out << j.dump(2) << "\n";
}

SessionConfig make_demo_config(unsigned modulus_bits) {
  const FixedParams fp{64, 32};
  // Stabilizing gains for the demo rig (exact dyadics in Q_{23,16}).
  const std::string k1 = "33.022125244140625";
  const std::string k2 = "-51.49261474609375";
  const std::string k3 = "0.6586151123046875";
  const std::string k4 = "-0.7884063720703125";
  const std::string k5 = "-0.5822296142578125";

  FixedMatrix a = FixedMatrix::from_decimal(fp, 3, 3,
                                            {"0", "0", "0",
                                             "0", "0", "0",
                                             k3, k4, k5});
  FixedMatrix b = FixedMatrix::from_decimal(fp, 3, 2,
                                            {"-50", "0",
                                             "0", "-50",
                                             k1, k2});
  FixedMatrix c = FixedMatrix::from_decimal(fp, 1, 3, {k3, k4, k5});
  FixedMatrix d = FixedMatrix::from_decimal(fp, 1, 2, {k1, k2});
  FixedMatrix x0 = FixedMatrix::from_decimal(fp, 3, 1, {"0", "0", "0"});

  ControllerSpec spec{std::move(a), std::move(b), std::move(c), std::move(d), std::move(x0),
                      64, 32, 80, default_modulus(modulus_bits)};
  spec.validate();

  // Synthetic second-order arm / unstable pendulum pair, discretized at 40 ms,
  // chosen so the gains above stabilize it under a one-step input delay.
  sim::PlantSpec plant;
  plant.a.resize(4, 4);
  plant.a << 0.99999999999999978, 0.0034171686799849671, 0.030079224260398239,
      4.6861337596332926e-05,
      0.0, 1.1884462714560631, 0.0, 0.042076686022271374,
      0.0, 0.16117422894914779, 0.5488116360940265, 0.0033937380111868118,
      0.0, 9.6776377851223927, 0.0, 1.167407928444927;
  plant.b.resize(4, 1);
  plant.b << 0.0046392817306649724, 0.016386632300527178, 0.21149179657471434,
      0.84153372044542529;
  plant.c.resize(2, 4);
  plant.c << 1, 0, 0, 0,
      0, 1, 0, 0;
  plant.x0 = Eigen::Vector4d(0.0, 2.0, 0.0, 0.0);  // pendulum starts 2 degrees off
  plant.delay = 1;
  plant.ky = 18;
  plant.ly = 9;

  SessionConfig cfg{std::move(spec), std::move(plant), "127.0.0.1:19000", "127.0.0.1:19001", 40,
                    5000};
  return cfg;
}

}  // namespace stpc
