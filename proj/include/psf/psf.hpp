#pragma once

/// Umbrella header.

#include "psf/cli.hpp"
#include "psf/config.hpp"
#include "psf/control_math.hpp"
#include "psf/errors.hpp"
#include "psf/filter.hpp"
#include "psf/io.hpp"
#include "psf/linear_program.hpp"
#include "psf/plant.hpp"
#include "psf/polytope.hpp"
#include "psf/qcqp.hpp"
#include "psf/sim.hpp"
#include "psf/solve_status.hpp"
