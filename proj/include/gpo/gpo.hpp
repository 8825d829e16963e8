#pragma once

#include "gpo/benchmarks.hpp"
#include "gpo/common.hpp"
#include "gpo/gpomcp.hpp"
#include "gpo/guard.hpp"
#include "gpo/harness.hpp"
#include "gpo/model_io.hpp"
#include "gpo/oracle.hpp"
#include "gpo/pomdp.hpp"
#include "gpo/support_game.hpp"
