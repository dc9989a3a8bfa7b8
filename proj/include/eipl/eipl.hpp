#pragma once

#include "eipl/error.hpp"
#include "eipl/text.hpp"
#include "eipl/line_resolution.hpp"
#include "eipl/corpus.hpp"
#include "eipl/prompting.hpp"
#include "eipl/backend.hpp"
#include "eipl/backend_factory.hpp"
#include "eipl/segmentation.hpp"
#include "eipl/pipeline.hpp"
#include "eipl/evaluation.hpp"
#include "eipl/service.hpp"
