#pragma once

#include "genprobe/error.hpp"
#include "genprobe/families.hpp"
#include "genprobe/lrf.hpp"
#include "genprobe/metrics.hpp"
#include "genprobe/spectra.hpp"
#include "genprobe/stats.hpp"
#include "genprobe/store.hpp"
