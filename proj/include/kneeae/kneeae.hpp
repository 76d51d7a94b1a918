#pragma once

#include "kneeae/cepstral.hpp"
#include "kneeae/classify/classifier.hpp"
#include "kneeae/common.hpp"
#include "kneeae/cv.hpp"
#include "kneeae/experiment.hpp"
#include "kneeae/features.hpp"
#include "kneeae/metrics.hpp"
#include "kneeae/selection.hpp"
#include "kneeae/signal_io.hpp"
#include "kneeae/spectral.hpp"
#include "kneeae/synthgen.hpp"
