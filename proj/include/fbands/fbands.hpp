#pragma once

#include "fbands/bootstrap.hpp"
#include "fbands/config.hpp"
#include "fbands/curves.hpp"
#include "fbands/depth.hpp"
#include "fbands/error.hpp"
#include "fbands/evaluation.hpp"
#include "fbands/harness.hpp"
#include "fbands/ingest.hpp"
#include "fbands/pipeline.hpp"
#include "fbands/regression.hpp"
#include "fbands/report.hpp"
#include "fbands/semimetrics.hpp"
#include "fbands/synthetic.hpp"
