#pragma once

#include "crownval/error.hpp"
#include "crownval/experiment.hpp"
#include "crownval/geom.hpp"
#include "crownval/labelgen.hpp"
#include "crownval/labels_io.hpp"
#include "crownval/metrics.hpp"
#include "crownval/parallel.hpp"
#include "crownval/pointcloud.hpp"
#include "crownval/predictions.hpp"
#include "crownval/raster.hpp"
#include "crownval/svg.hpp"
#include "crownval/synth.hpp"
#include "crownval/textio.hpp"
