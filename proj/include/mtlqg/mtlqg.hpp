#pragma once

#include "mtlqg/errors.hpp"
#include "mtlqg/linalg.hpp"
#include "mtlqg/random.hpp"
#include "mtlqg/task.hpp"
#include "mtlqg/innovation.hpp"
#include "mtlqg/lifting.hpp"
#include "mtlqg/lqg_cost.hpp"
#include "mtlqg/heterogeneity.hpp"
#include "mtlqg/rollout.hpp"
#include "mtlqg/trainer.hpp"
#include "mtlqg/experiments.hpp"
#include "mtlqg/io.hpp"
#include "mtlqg/config.hpp"
