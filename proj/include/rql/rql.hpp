#pragma once

#include "rql/attack.hpp"
#include "rql/bellman.hpp"
#include "rql/commands.hpp"
#include "rql/experiment.hpp"
#include "rql/fig1.hpp"
#include "rql/io.hpp"
#include "rql/mdp.hpp"
#include "rql/order_statistic_tree.hpp"
#include "rql/qlearning.hpp"
#include "rql/random.hpp"
#include "rql/reward_model.hpp"
#include "rql/stats.hpp"
#include "rql/trimmed_mean.hpp"
