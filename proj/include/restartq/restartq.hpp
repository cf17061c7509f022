// restartq.hpp - umbrella header for the simulation and analysis core.
// The YAML config layer (config.hpp) and dataset writer (dataset.hpp) are
// separate because they pull in yaml-cpp and nlohmann::json.

#pragma once

#include "restartq/analytics.hpp"
#include "restartq/channel.hpp"
#include "restartq/distributions.hpp"
#include "restartq/engine.hpp"
#include "restartq/errors.hpp"
#include "restartq/experiments.hpp"
#include "restartq/numerics.hpp"
#include "restartq/rng.hpp"
#include "restartq/workload.hpp"
