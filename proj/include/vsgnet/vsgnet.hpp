#pragma once

#include "vsgnet/cli.hpp"
#include "vsgnet/common.hpp"
#include "vsgnet/config.hpp"
#include "vsgnet/data.hpp"
#include "vsgnet/eval.hpp"
#include "vsgnet/fixture.hpp"
#include "vsgnet/gradcheck.hpp"
#include "vsgnet/graph.hpp"
#include "vsgnet/head.hpp"
#include "vsgnet/ops.hpp"
#include "vsgnet/parallel.hpp"
#include "vsgnet/params.hpp"
#include "vsgnet/serialize.hpp"
#include "vsgnet/spatial.hpp"
#include "vsgnet/tensor.hpp"
#include "vsgnet/train.hpp"
#include "vsgnet/visual.hpp"
