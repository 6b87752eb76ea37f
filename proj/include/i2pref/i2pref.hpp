// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "i2pref/geometry/metrics.hpp"
#include "i2pref/geometry/sampling.hpp"
#include "i2pref/io/png.hpp"
#include "i2pref/io/xyz.hpp"
#include "i2pref/model/pipeline.hpp"
#include "i2pref/train/checkpoint.hpp"
#include "i2pref/train/trainer.hpp"
