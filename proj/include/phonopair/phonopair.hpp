// Convenience umbrella header.
#pragma once

#include "config.hpp"
#include "detection.hpp"
#include "dynamics.hpp"
#include "linalg.hpp"
#include "open_system.hpp"
#include "protocol.hpp"
#include "rng.hpp"
#include "runner.hpp"
#include "stats.hpp"
