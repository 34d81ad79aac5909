#pragma once

#include "advsim/adversary.hpp"
#include "advsim/config.hpp"
#include "advsim/dynamics.hpp"
#include "advsim/error.hpp"
#include "advsim/flowmatch.hpp"
#include "advsim/geometry.hpp"
#include "advsim/harness.hpp"
#include "advsim/idm.hpp"
#include "advsim/metrics.hpp"
#include "advsim/planner.hpp"
#include "advsim/protocol.hpp"
#include "advsim/report.hpp"
#include "advsim/scenario.hpp"
#include "advsim/synth.hpp"
