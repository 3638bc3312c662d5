#pragma once

#include "lasenn/adversarial.hpp"
#include "lasenn/classifier.hpp"
#include "lasenn/combiner.hpp"
#include "lasenn/config.hpp"
#include "lasenn/diagnostics.hpp"
#include "lasenn/error.hpp"
#include "lasenn/experiment.hpp"
#include "lasenn/knn_index.hpp"
#include "lasenn/rng.hpp"
#include "lasenn/tensor_io.hpp"
#include "lasenn/toymodel.hpp"
