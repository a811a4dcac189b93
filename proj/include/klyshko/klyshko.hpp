#pragma once
// Umbrella header.

#include "klyshko/calibration.hpp"
#include "klyshko/config.hpp"
#include "klyshko/electronics.hpp"
#include "klyshko/pipeline.hpp"
#include "klyshko/quantity.hpp"
#include "klyshko/random.hpp"
#include "klyshko/reference_data.hpp"
#include "klyshko/report.hpp"
#include "klyshko/simulation.hpp"
#include "klyshko/units.hpp"
