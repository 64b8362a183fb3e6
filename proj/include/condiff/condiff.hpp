#pragma once

#include "condiff/conditioning/akgm.hpp"
#include "condiff/conditioning/block.hpp"
#include "condiff/conditioning/macs.hpp"
#include "condiff/core/error.hpp"
#include "condiff/core/rng.hpp"
#include "condiff/data/dataset.hpp"
#include "condiff/data/degradations.hpp"
#include "condiff/data/png.hpp"
#include "condiff/data/procedural.hpp"
#include "condiff/diffusion/process.hpp"
#include "condiff/diffusion/sampler.hpp"
#include "condiff/diffusion/schedule.hpp"
#include "condiff/networks/config.hpp"
#include "condiff/networks/embedding.hpp"
#include "condiff/networks/predictor.hpp"
#include "condiff/networks/unet.hpp"
#include "condiff/nn/layers.hpp"
#include "condiff/nn/params.hpp"
#include "condiff/tensor/autograd.hpp"
#include "condiff/tensor/conv.hpp"
#include "condiff/tensor/gradcheck.hpp"
#include "condiff/tensor/io.hpp"
#include "condiff/tensor/ops.hpp"
#include "condiff/tensor/tensor.hpp"
#include "condiff/tiling/plan.hpp"
#include "condiff/tiling/sampler.hpp"
#include "condiff/train/checkpoint.hpp"
#include "condiff/train/gradcheck_suite.hpp"
#include "condiff/train/macs_report.hpp"
#include "condiff/train/metrics.hpp"
#include "condiff/train/optim.hpp"
#include "condiff/train/run_config.hpp"
#include "condiff/train/trainer.hpp"
