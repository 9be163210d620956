#pragma once

#include "channel.hpp"
#include "experiment.hpp"
#include "filter.hpp"
#include "io.hpp"
#include "linalg.hpp"
#include "mare.hpp"
#include "model.hpp"
#include "sim.hpp"
#include "stats.hpp"
