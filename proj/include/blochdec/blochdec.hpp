#pragma once

// Umbrella header.
#include "blochdec/error.hpp"
#include "blochdec/parallel.hpp"
#include "blochdec/grid.hpp"
#include "blochdec/field_io.hpp"
#include "blochdec/fft.hpp"
#include "blochdec/potential.hpp"
#include "blochdec/band.hpp"
#include "blochdec/band_cache.hpp"
#include "blochdec/blochxform.hpp"
#include "blochdec/steppers.hpp"
#include "blochdec/wkb.hpp"
#include "blochdec/harness.hpp"
