#pragma once

#include "retden/agents.hpp"
#include "retden/bellman.hpp"
#include "retden/config.hpp"
#include "retden/density.hpp"
#include "retden/experiment.hpp"
#include "retden/mdp.hpp"
#include "retden/ng_oracle.hpp"
#include "retden/ng_update.hpp"
#include "retden/oracle_check.hpp"
#include "retden/param_table.hpp"
#include "retden/quadrature.hpp"
