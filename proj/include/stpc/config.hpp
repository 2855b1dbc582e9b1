#pragma once

#include <optional>
#include <string>

#include "stpc/controller.hpp"
#include "stpc/simharness.hpp"

namespace stpc {

// Everything the three processes read from one JSON file: session parameters,
// controller matrices (decimal strings, validated for exact representability
// at ell), endpoints, and optionally a plant for simulation runs.
struct SessionConfig {
  ControllerSpec controller;
  std::optional<sim::PlantSpec> plant;
  std::string party0_addr = "127.0.0.1:19000";
  std::string party1_addr = "127.0.0.1:19001";
  unsigned period_ms = 40;
  unsigned timeout_ms = 5000;
};

SessionConfig load_config(const std::string& path);
void save_config(const SessionConfig& cfg, const std::string& path);

// The shipped demo: the rotary-pendulum stabilizing gains with k = 64,
// ell = 32, lambda = 80, and a synthetic discrete-time plant those gains
// stabilize under one-step input delay. The plant is invented demo data, not
// a model of any physical testbed. modulus_bits must be 248 or more.
SessionConfig make_demo_config(unsigned modulus_bits = 256);

}  // namespace stpc
