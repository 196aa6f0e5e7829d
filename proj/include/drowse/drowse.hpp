#ifndef DROWSE_DROWSE_HPP_
#define DROWSE_DROWSE_HPP_

#include "baselines.hpp"
#include "classifiers.hpp"
#include "dataio.hpp"
#include "error.hpp"
#include "features.hpp"
#include "interpret.hpp"
#include "loss.hpp"
#include "network.hpp"
#include "numerics.hpp"
#include "resample.hpp"
#include "synthetic.hpp"
#include "training.hpp"

#endif // DROWSE_DROWSE_HPP_
