#pragma once

#include "fedft/analysis.hpp"
#include "fedft/checkpoint.hpp"
#include "fedft/data.hpp"
#include "fedft/errors.hpp"
#include "fedft/experiment.hpp"
#include "fedft/federation.hpp"
#include "fedft/nn.hpp"
#include "fedft/random.hpp"
#include "fedft/reports.hpp"
#include "fedft/selection.hpp"
#include "fedft/tensor.hpp"
