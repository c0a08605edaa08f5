#pragma once

#include "permk/argen.hpp"
#include "permk/core.hpp"
#include "permk/excessive.hpp"
#include "permk/io.hpp"
#include "permk/kernels.hpp"
#include "permk/mcsim.hpp"
#include "permk/normalizers.hpp"
#include "permk/sequence.hpp"
#include "permk/spec.hpp"
#include "permk/symmetrize.hpp"
