#pragma once

#include "hmm2/data.hpp"
#include "hmm2/error.hpp"
#include "hmm2/hierarchical.hpp"
#include "hmm2/hilbert.hpp"
#include "hmm2/inference.hpp"
#include "hmm2/map_io.hpp"
#include "hmm2/model.hpp"
#include "hmm2/model_io.hpp"
#include "hmm2/succession.hpp"
#include "hmm2/synthetic.hpp"
#include "hmm2/training.hpp"
