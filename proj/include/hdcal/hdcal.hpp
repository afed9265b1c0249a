#pragma once

#include "hdcal/adversary.hpp"
#include "hdcal/certificate.hpp"
#include "hdcal/errors.hpp"
#include "hdcal/forecaster.hpp"
#include "hdcal/harness.hpp"
#include "hdcal/metrics.hpp"
#include "hdcal/parallel.hpp"
#include "hdcal/rng.hpp"
#include "hdcal/simplex.hpp"
#include "hdcal/transcript.hpp"
