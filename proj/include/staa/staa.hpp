#pragma once

#include "staa/errors.hpp"
#include "staa/tensor.hpp"
#include "staa/autodiff.hpp"
#include "staa/conv.hpp"
#include "staa/resample.hpp"
#include "staa/volume.hpp"
#include "staa/io.hpp"
#include "staa/scene.hpp"
#include "staa/downsampler.hpp"
#include "staa/upsampler.hpp"
#include "staa/baselines.hpp"
#include "staa/spectral.hpp"
#include "staa/metrics.hpp"
#include "staa/checkpoint.hpp"
#include "staa/trainer.hpp"
