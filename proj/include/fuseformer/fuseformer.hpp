#pragma once

#include "fuseformer/common.hpp"
#include "fuseformer/tensor.hpp"
#include "fuseformer/patching.hpp"
#include "fuseformer/transformer.hpp"
#include "fuseformer/model.hpp"
#include "fuseformer/checkpoint.hpp"
#include "fuseformer/training.hpp"
#include "fuseformer/data.hpp"
#include "fuseformer/metrics.hpp"
#include "fuseformer/gradcheck.hpp"
#include "fuseformer/gradcheck_suite.hpp"
