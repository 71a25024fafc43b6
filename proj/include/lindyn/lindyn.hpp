#pragma once

#include "lindyn/config.hpp"
#include "lindyn/error.hpp"
#include "lindyn/integrators.hpp"
#include "lindyn/linalg.hpp"
#include "lindyn/metrics.hpp"
#include "lindyn/network.hpp"
#include "lindyn/rng.hpp"
#include "lindyn/sweep.hpp"
#include "lindyn/task.hpp"
#include "lindyn/trajectory.hpp"
#include "lindyn/verify.hpp"
