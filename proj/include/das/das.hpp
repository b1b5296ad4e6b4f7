#pragma once

#include "das/clustering.hpp"
#include "das/fading.hpp"
#include "das/geometry.hpp"
#include "das/harness.hpp"
#include "das/metrics.hpp"
#include "das/power.hpp"
#include "das/rng.hpp"
