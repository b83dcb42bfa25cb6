#pragma once

#include "neural_td/config.hpp"
#include "neural_td/errors.hpp"
#include "neural_td/experiments.hpp"
#include "neural_td/io.hpp"
#include "neural_td/mdp.hpp"
#include "neural_td/network.hpp"
#include "neural_td/norms.hpp"
#include "neural_td/random.hpp"
#include "neural_td/studies.hpp"
#include "neural_td/td.hpp"
#include "neural_td/trace.hpp"
#include "neural_td/verify.hpp"
