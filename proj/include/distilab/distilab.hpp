#pragma once

#include "distilab/construction.hpp"
#include "distilab/distillation.hpp"
#include "distilab/harness.hpp"
#include "distilab/hermite.hpp"
#include "distilab/io.hpp"
#include "distilab/network.hpp"
#include "distilab/oracle.hpp"
#include "distilab/quadrature.hpp"
#include "distilab/random.hpp"
#include "distilab/task_model.hpp"
#include "distilab/tensor.hpp"
#include "distilab/training.hpp"
