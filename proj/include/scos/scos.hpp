#pragma once

#include "scos/acquisition.hpp"
#include "scos/annotation.hpp"
#include "scos/breathhold.hpp"
#include "scos/cardiac.hpp"
#include "scos/contrast.hpp"
#include "scos/error.hpp"
#include "scos/io/cardiac_csv.hpp"
#include "scos/io/config.hpp"
#include "scos/io/frame_file.hpp"
#include "scos/io/json_io.hpp"
#include "scos/io/trace_csv.hpp"
#include "scos/stats/cohort.hpp"
#include "scos/synth/cohort.hpp"
#include "scos/synth/rng.hpp"
#include "scos/synth/session.hpp"
#include "scos/synth/speckle.hpp"
#include "scos/trace.hpp"
