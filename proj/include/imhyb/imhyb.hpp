#pragma once

#include "imhyb/approximators.hpp"
#include "imhyb/config.hpp"
#include "imhyb/errors.hpp"
#include "imhyb/evaluation.hpp"
#include "imhyb/io.hpp"
#include "imhyb/lm.hpp"
#include "imhyb/numerics/dense.hpp"
#include "imhyb/numerics/series.hpp"
#include "imhyb/pse.hpp"
#include "imhyb/rng.hpp"
#include "imhyb/sampling.hpp"
#include "imhyb/systems.hpp"
#include "imhyb/training.hpp"
