#pragma once

#include "allprep/error.hpp"
#include "allprep/image.hpp"
#include "allprep/raster.hpp"
#include "allprep/colorspace.hpp"
#include "allprep/cluster.hpp"
#include "allprep/morphmask.hpp"
#include "allprep/parallel.hpp"
#include "allprep/pipeline.hpp"
#include "allprep/dataprep.hpp"
#include "allprep/nnkit.hpp"
#include "allprep/nncheck.hpp"
#include "allprep/metrics.hpp"
