#pragma once

#include "sprobit/cavi.hpp"
#include "sprobit/errors.hpp"
#include "sprobit/evaluation.hpp"
#include "sprobit/gibbs.hpp"
#include "sprobit/io.hpp"
#include "sprobit/model_core.hpp"
#include "sprobit/parallel.hpp"
#include "sprobit/rng.hpp"
#include "sprobit/stat_kernels.hpp"
