#pragma once

#include "ecocontrol/linsolve.hpp"
#include "ecocontrol/dynamics.hpp"
#include "ecocontrol/grid.hpp"
#include "ecocontrol/io.hpp"
#include "ecocontrol/model.hpp"
#include "ecocontrol/objective.hpp"
#include "ecocontrol/region.hpp"
#include "ecocontrol/scenario.hpp"
