// spinlab.hpp
// Umbrella header.

#pragma once

#include "spinlab/common.hpp"
#include "spinlab/decoherence.hpp"
#include "spinlab/dmf.hpp"
#include "spinlab/gates.hpp"
#include "spinlab/grape.hpp"
#include "spinlab/io.hpp"
#include "spinlab/numerics.hpp"
#include "spinlab/operator.hpp"
#include "spinlab/parallel.hpp"
#include "spinlab/rng.hpp"
#include "spinlab/selftest.hpp"
#include "spinlab/state.hpp"
#include "spinlab/tomography.hpp"
