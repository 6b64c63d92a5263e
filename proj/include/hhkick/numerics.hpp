#pragma once

// Umbrella header for the numerical kernels.

#include "integrate.hpp"
#include "linalg.hpp"
#include "optimize.hpp"
