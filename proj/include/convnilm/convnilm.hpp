#pragma once

// Single-include umbrella for the library.

#include "convnilm/checkpoint.hpp"
#include "convnilm/config.hpp"
#include "convnilm/conv.hpp"
#include "convnilm/data.hpp"
#include "convnilm/errors.hpp"
#include "convnilm/grad_check.hpp"
#include "convnilm/metrics.hpp"
#include "convnilm/model.hpp"
#include "convnilm/nn.hpp"
#include "convnilm/ops.hpp"
#include "convnilm/rng.hpp"
#include "convnilm/synthetic.hpp"
#include "convnilm/tensor.hpp"
#include "convnilm/train.hpp"
