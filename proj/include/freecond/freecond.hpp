#pragma once

// Convenience include for the whole library.

#include "freecond/analysis.hpp"
#include "freecond/cli.hpp"
#include "freecond/conditioning.hpp"
#include "freecond/errors.hpp"
#include "freecond/freq.hpp"
#include "freecond/grid.hpp"
#include "freecond/image_io.hpp"
#include "freecond/metrics.hpp"
#include "freecond/rng.hpp"
#include "freecond/sampler.hpp"
#include "freecond/tensor_io.hpp"
#include "freecond/toynet.hpp"
#include "freecond/util.hpp"
