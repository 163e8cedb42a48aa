#pragma once

// Everything: media I/O, the codec and its stages, metrics and the CLI.

#include "dkf/cli.hpp"
#include "dkf/codec.hpp"
#include "dkf/dering.hpp"
#include "dkf/entropy.hpp"
#include "dkf/eval.hpp"
#include "dkf/io_media.hpp"
#include "dkf/predict.hpp"
#include "dkf/pvq.hpp"
#include "dkf/transform.hpp"
