#pragma once

#include "semdnn/cam.hpp"
#include "semdnn/config.hpp"
#include "semdnn/crossbar.hpp"
#include "semdnn/data.hpp"
#include "semdnn/device.hpp"
#include "semdnn/dynamic.hpp"
#include "semdnn/energy.hpp"
#include "semdnn/mapped.hpp"
#include "semdnn/mnist.hpp"
#include "semdnn/model.hpp"
#include "semdnn/ops.hpp"
#include "semdnn/quantize.hpp"
#include "semdnn/rng.hpp"
#include "semdnn/serialize.hpp"
#include "semdnn/sweep.hpp"
#include "semdnn/synthdata.hpp"
#include "semdnn/tensor.hpp"
#include "semdnn/tpe.hpp"
#include "semdnn/train.hpp"
