#pragma once
// Strict JSON run configuration: explicit schema version, unknown keys are
// rejected by name, ranges validated on load.
#include <string>

#include "madt/training.hpp"

namespace madt {

TrainConfig parse_train_config(const std::string& json_text);
TrainConfig load_train_config_file(const std::string& path);

// All keys with their default values, as a JSON document.
std::string default_train_config_json();

}  // namespace madt
