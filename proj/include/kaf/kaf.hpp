#pragma once

#include "kaf/error.hpp"
#include "kaf/parallel.hpp"
#include "kaf/types.hpp"

#include "kaf/dynamics/hamiltonian.hpp"
#include "kaf/dynamics/noise.hpp"
#include "kaf/dynamics/sampling.hpp"
#include "kaf/dynamics/system.hpp"
#include "kaf/embedding.hpp"
#include "kaf/io/matrix_io.hpp"
#include "kaf/kernel/bandwidth.hpp"
#include "kaf/kernel/markov.hpp"
#include "kaf/kernel/neighbors.hpp"
#include "kaf/estimators/eigenbasis.hpp"
#include "kaf/estimators/lanczos.hpp"
#include "kaf/estimators/metrics.hpp"
#include "kaf/estimators/nystrom.hpp"
#include "kaf/estimators/smoothing.hpp"
#include "kaf/smoother.hpp"
#include "kaf/baselines/enkf.hpp"
