#pragma once

#include "mars/agent.hpp"
#include "mars/config.hpp"
#include "mars/dag.hpp"
#include "mars/decision.hpp"
#include "mars/error.hpp"
#include "mars/heuristics.hpp"
#include "mars/job.hpp"
#include "mars/metrics.hpp"
#include "mars/neural.hpp"
#include "mars/simulator.hpp"
#include "mars/swf.hpp"
#include "mars/trainer.hpp"
#include "mars/workload.hpp"
