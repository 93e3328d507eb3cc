#pragma once

#include "wir/descriptor_source.hpp"
#include "wir/encoding.hpp"
#include "wir/error.hpp"
#include "wir/matrix.hpp"
#include "wir/netvlad.hpp"
#include "wir/numerics.hpp"
#include "wir/page_ingest.hpp"
#include "wir/parallel.hpp"
#include "wir/retrieval.hpp"
#include "wir/rng.hpp"
#include "wir/synth.hpp"
#include "wir/training.hpp"
