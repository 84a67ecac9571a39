#pragma once

#include "analytics.hpp"
#include "coherence.hpp"
#include "config.hpp"
#include "csv.hpp"
#include "hmm.hpp"
#include "manifest.hpp"
#include "math_util.hpp"
#include "parallel.hpp"
#include "params.hpp"
#include "rng.hpp"
#include "svgplot.hpp"
#include "trajectory.hpp"
#include "version.hpp"
