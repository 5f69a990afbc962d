#pragma once

#include "hpg/baseline.hpp"
#include "hpg/env.hpp"
#include "hpg/estimators.hpp"
#include "hpg/harness.hpp"
#include "hpg/nnet.hpp"
#include "hpg/oracle.hpp"
#include "hpg/policy.hpp"
#include "hpg/trajectory.hpp"
