#pragma once

#include "pmmkit/checkpoint.hpp"
#include "pmmkit/config.hpp"
#include "pmmkit/data.hpp"
#include "pmmkit/error.hpp"
#include "pmmkit/harness.hpp"
#include "pmmkit/margin.hpp"
#include "pmmkit/model.hpp"
#include "pmmkit/numkernel.hpp"
#include "pmmkit/objective.hpp"
#include "pmmkit/selector.hpp"
