#pragma once

#include "plu/audit.hpp"
#include "plu/augment.hpp"
#include "plu/checkpoint.hpp"
#include "plu/config.hpp"
#include "plu/dataset_io.hpp"
#include "plu/error.hpp"
#include "plu/experiment.hpp"
#include "plu/geometry.hpp"
#include "plu/known_head.hpp"
#include "plu/labels.hpp"
#include "plu/metrics.hpp"
#include "plu/predictor.hpp"
#include "plu/protocol.hpp"
#include "plu/report.hpp"
#include "plu/rng.hpp"
#include "plu/selection.hpp"
#include "plu/tasks.hpp"
#include "plu/uda.hpp"
#include "plu/world.hpp"
