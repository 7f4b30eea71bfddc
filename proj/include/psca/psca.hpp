#pragma once

#include "psca/errors.hpp"
#include "psca/tensor_core.hpp"
#include "psca/random.hpp"
#include "psca/sample_set.hpp"
#include "psca/separable_component.hpp"
#include "psca/pip.hpp"
#include "psca/scd_fit.hpp"
#include "psca/rsep_operator.hpp"
#include "psca/solver.hpp"
#include "psca/predictor.hpp"
#include "psca/model_select.hpp"
#include "psca/simulate.hpp"
#include "psca/io.hpp"
#include "psca/experiments.hpp"
