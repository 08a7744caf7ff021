#pragma once

#include "fdbss/beamforming.hpp"
#include "fdbss/errors.hpp"
#include "fdbss/evaluation.hpp"
#include "fdbss/ica.hpp"
#include "fdbss/permutation.hpp"
#include "fdbss/pipeline.hpp"
#include "fdbss/scale_fix.hpp"
#include "fdbss/signal.hpp"
#include "fdbss/synth.hpp"
#include "fdbss/wav.hpp"
#include "fdbss/whitening.hpp"
