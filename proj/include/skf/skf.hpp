#pragma once

#include "skf/errors.hpp"
#include "skf/matalg.hpp"
#include "skf/model.hpp"
#include "skf/model_io.hpp"
#include "skf/tuning.hpp"
#include "skf/bdf.hpp"
#include "skf/estimators.hpp"
#include "skf/simulate.hpp"
#include "skf/metrics.hpp"
#include "skf/pipeline/config.hpp"
#include "skf/pipeline/scenario.hpp"
#include "skf/pipeline/svg.hpp"
#include "skf/pipeline/run.hpp"
#include "skf/pipeline/stages.hpp"
