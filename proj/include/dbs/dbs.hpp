#pragma once

#include "dbs/appearance.hpp"
#include "dbs/common.hpp"
#include "dbs/compression.hpp"
#include "dbs/config.hpp"
#include "dbs/dataset.hpp"
#include "dbs/image.hpp"
#include "dbs/init.hpp"
#include "dbs/kernel.hpp"
#include "dbs/mcmc.hpp"
#include "dbs/metrics.hpp"
#include "dbs/optimizer.hpp"
#include "dbs/parallel.hpp"
#include "dbs/ply.hpp"
#include "dbs/png.hpp"
#include "dbs/primitive.hpp"
#include "dbs/rasterizer.hpp"
#include "dbs/scene.hpp"
#include "dbs/sceneio.hpp"
#include "dbs/toy.hpp"
#include "dbs/training.hpp"
