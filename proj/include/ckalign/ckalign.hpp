#pragma once

#include "ckalign/assignment.hpp"
#include "ckalign/baselines.hpp"
#include "ckalign/embedding_store.hpp"
#include "ckalign/error.hpp"
#include "ckalign/evaluation.hpp"
#include "ckalign/kernel.hpp"
#include "ckalign/local_cka.hpp"
#include "ckalign/parallel.hpp"
#include "ckalign/preprocess.hpp"
#include "ckalign/qap.hpp"
#include "ckalign/random.hpp"
#include "ckalign/score_matrix.hpp"
#include "ckalign/synth.hpp"
