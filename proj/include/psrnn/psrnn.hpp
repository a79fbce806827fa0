#pragma once

#include "psrnn/common.hpp"
#include "psrnn/config.hpp"
#include "psrnn/conv.hpp"
#include "psrnn/degrade.hpp"
#include "psrnn/error.hpp"
#include "psrnn/evaluate.hpp"
#include "psrnn/experiments.hpp"
#include "psrnn/gru.hpp"
#include "psrnn/hadamard.hpp"
#include "psrnn/image.hpp"
#include "psrnn/intra.hpp"
#include "psrnn/layers.hpp"
#include "psrnn/loss.hpp"
#include "psrnn/model_io.hpp"
#include "psrnn/network.hpp"
#include "psrnn/optim.hpp"
#include "psrnn/prelu.hpp"
#include "psrnn/psrnn_plus.hpp"
#include "psrnn/rng.hpp"
#include "psrnn/sampling.hpp"
#include "psrnn/synth.hpp"
#include "psrnn/tensor.hpp"
#include "psrnn/trainer.hpp"
