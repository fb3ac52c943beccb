#pragma once

#include "bridge.hpp"
#include "experiments.hpp"
#include "lowdisc.hpp"
#include "mlqmc.hpp"
#include "models.hpp"
#include "parallel.hpp"
#include "particle.hpp"
#include "rng.hpp"
#include "stats.hpp"
