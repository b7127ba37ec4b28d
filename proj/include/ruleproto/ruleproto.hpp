#pragma once

#include "ruleproto/math.hpp"
#include "ruleproto/relational.hpp"
#include "ruleproto/rules.hpp"
#include "ruleproto/prior.hpp"
#include "ruleproto/likelihood.hpp"
#include "ruleproto/search.hpp"
#include "ruleproto/blocksworld.hpp"
#include "ruleproto/eval.hpp"
#include "ruleproto/io.hpp"
