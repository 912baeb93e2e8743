#pragma once

#include "ope/bvn.hpp"
#include "ope/correction.hpp"
#include "ope/error.hpp"
#include "ope/estimators.hpp"
#include "ope/harness.hpp"
#include "ope/io.hpp"
#include "ope/position_bias.hpp"
#include "ope/ranking.hpp"
#include "ope/rng.hpp"
#include "ope/rules.hpp"
#include "ope/simulator.hpp"
