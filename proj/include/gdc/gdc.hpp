#pragma once

#include "gdc/core.hpp"
#include "gdc/graph.hpp"
#include "gdc/dataset_io.hpp"
#include "gdc/synthesis.hpp"
#include "gdc/autodiff.hpp"
#include "gdc/attention.hpp"
#include "gdc/sinkhorn.hpp"
#include "gdc/model.hpp"
#include "gdc/objectives.hpp"
#include "gdc/training.hpp"
#include "gdc/checkpoint.hpp"
#include "gdc/projection.hpp"
#include "gdc/config.hpp"
