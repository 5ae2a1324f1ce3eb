#pragma once

#include "blocksweep/errors.hpp"
#include "blocksweep/blockspace.hpp"
#include "blocksweep/prox.hpp"
#include "blocksweep/monotone.hpp"
#include "blocksweep/linear.hpp"
#include "blocksweep/smooth.hpp"
#include "blocksweep/regularity.hpp"
#include "blocksweep/sweeping.hpp"
#include "blocksweep/trace.hpp"
#include "blocksweep/solvers.hpp"
#include "blocksweep/problems.hpp"
#include "blocksweep/diagnostics.hpp"
#include "blocksweep/trace_io.hpp"
#include "blocksweep/config.hpp"
