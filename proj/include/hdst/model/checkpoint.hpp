#pragma once

#include <map>
#include <optional>
#include <string>

#include "hdst/model/hdst.hpp"
#include "hdst/optim.hpp"

namespace hdst::model {

/// Checkpoint = text manifest at `path` plus raw blob at `path + ".bin"`.
///
/// Manifest lines (space separated, one record per line):
///   HDSTCKPT 1
///   config.<field> <json value>
///   meta.<key> <text to end of line>
///   optim.<field> <value>             step, learning_rate, beta1, beta2, epsilon
///   tensor <name> <offset> <count> <d0>x<d1>x...
///
/// The blob holds every tensor as little-endian IEEE-754 binary64 at the
/// listed scalar offset, so values round-trip bit-exactly. Adam moments are
/// stored as tensors named "adam.m:<param>" and "adam.v:<param>".
struct Checkpoint {
    ModelConfig config;
    std::map<std::string, Tensor> params;
    std::optional<OptimizerState> optimizer;
    std::map<std::string, std::string> meta;
};

void save_checkpoint(const std::string& path, const HdstModel& model, const OptimizerState* optimizer = nullptr,
                     const std::map<std::string, std::string>& meta = {});
Checkpoint read_checkpoint(const std::string& path);

/// Copies stored values into a model built from the same config. Throws
/// ShapeError on missing or mismatched tensors.
void load_parameters(HdstModel& model, const Checkpoint& ckpt);
HdstModel model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace hdst::model
