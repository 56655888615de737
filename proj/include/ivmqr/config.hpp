#pragma once

#include "ivmqr/model.hpp"

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace ivmqr {

//! Resolved experiment configuration: the user document merged over the
//! defaults, validated before any computation.
struct ExperimentConfig
{
  nlohmann::ordered_json resolved;
  std::string path; // config file, for resolving relative data paths
  std::uint64_t seed = 1;

  const nlohmann::ordered_json& section(const std::string& name) const { return resolved.at(name); }
  // Data path relative to the config file, empty when absent.
  std::string data_path() const;
};

// Every key with its default. The model section holds the keys shared by all
// model kinds; kind-specific keys come from model_defaults.
nlohmann::ordered_json default_config();
nlohmann::ordered_json model_defaults(const std::string& kind);

// errors: invalid-config with "<path>:<line>: ..." diagnostics.
ExperimentConfig parse_config(const std::string& text,
                              const std::string& path = "<config>",
                              std::optional<std::uint64_t> seed_override = std::nullopt);
ExperimentConfig load_config(const std::string& path,
                             std::optional<std::uint64_t> seed_override = std::nullopt);

StructuralModel build_model(const nlohmann::ordered_json& model_section);

} // namespace ivmqr
