#pragma once

#include "msplit/error.hpp"
#include "msplit/linops.hpp"
#include "msplit/operators.hpp"
#include "msplit/proxlib.hpp"
#include "msplit/stepsize.hpp"
#include "msplit/solvers.hpp"
#include "msplit/diagnostics.hpp"
#include "msplit/tomo.hpp"
#include "msplit/synthetic.hpp"
#include "msplit/io.hpp"
