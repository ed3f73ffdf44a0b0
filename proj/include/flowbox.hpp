#pragma once

#include "flowbox/common.hpp"
#include "flowbox/dsl.hpp"
#include "flowbox/field.hpp"
#include "flowbox/flowbox.hpp"
#include "flowbox/integrate.hpp"
#include "flowbox/io.hpp"
#include "flowbox/verify.hpp"
