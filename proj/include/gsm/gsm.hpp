#pragma once

#include "gsm/bench.hpp"
#include "gsm/correspondence.hpp"
#include "gsm/descriptors.hpp"
#include "gsm/error.hpp"
#include "gsm/geometry.hpp"
#include "gsm/hungarian.hpp"
#include "gsm/io.hpp"
#include "gsm/json_io.hpp"
#include "gsm/kdtree.hpp"
#include "gsm/matching.hpp"
#include "gsm/parallel.hpp"
#include "gsm/ply.hpp"
#include "gsm/probability.hpp"
#include "gsm/registration.hpp"
#include "gsm/similarity.hpp"
#include "gsm/sinkhorn.hpp"
#include "gsm/synthetic.hpp"
