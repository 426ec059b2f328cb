// Copyright (c) 2026 latentswap contributors
// SPDX-License-Identifier: Apache-2.0
//
// Umbrella header for the latentswap library.

#pragma once

#include "latentswap/autodiff.hpp"
#include "latentswap/encoder.hpp"
#include "latentswap/errors.hpp"
#include "latentswap/evaluation.hpp"
#include "latentswap/image_io.hpp"
#include "latentswap/latent.hpp"
#include "latentswap/losses.hpp"
#include "latentswap/manipulators.hpp"
#include "latentswap/oracles.hpp"
#include "latentswap/pipeline.hpp"
#include "latentswap/rng.hpp"
#include "latentswap/serialize.hpp"
#include "latentswap/synthesis.hpp"
#include "latentswap/synthetic.hpp"
#include "latentswap/tensor.hpp"
#include "latentswap/trainer.hpp"
