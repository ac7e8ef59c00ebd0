#pragma once

#include "jmf/model.hpp"
#include "jmf/objective.hpp"
#include "jmf/subproblem.hpp"
#include "jmf/solvers.hpp"
#include "jmf/synthgen.hpp"
#include "jmf/evaluate.hpp"
#include "jmf/predict.hpp"
#include "jmf/io.hpp"
#include "jmf/artifacts.hpp"
#include "jmf/experiment.hpp"
