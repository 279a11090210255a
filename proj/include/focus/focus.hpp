#pragma once

#include "focus/baselines.hpp"
#include "focus/corpus.hpp"
#include "focus/error.hpp"
#include "focus/matcher.hpp"
#include "focus/matrix.hpp"
#include "focus/pipeline.hpp"
#include "focus/report.hpp"
#include "focus/skipgram.hpp"
#include "focus/sparsemax.hpp"
#include "focus/vocab.hpp"
