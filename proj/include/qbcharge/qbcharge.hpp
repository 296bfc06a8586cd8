#pragma once

// Umbrella header.

#include "qbcharge/battery_model.hpp"
#include "qbcharge/dynamics.hpp"
#include "qbcharge/ergotropy.hpp"
#include "qbcharge/errors.hpp"
#include "qbcharge/operator_core.hpp"
#include "qbcharge/scenario.hpp"
#include "qbcharge/spectral_flow.hpp"
#include "qbcharge/thermo_metrics.hpp"
#include "qbcharge/version.hpp"
