#pragma once

#include "spit/barrier.hpp"
#include "spit/dynamics.hpp"
#include "spit/error.hpp"
#include "spit/geometry.hpp"
#include "spit/power_iteration.hpp"
#include "spit/projection.hpp"
#include "spit/qp.hpp"
#include "spit/rigidity.hpp"
#include "spit/spectral.hpp"
#include "spit/trajectory.hpp"
