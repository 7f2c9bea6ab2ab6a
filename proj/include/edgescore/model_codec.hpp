#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "edgescore/astore.hpp"
#include "edgescore/capsnet.hpp"
#include "edgescore/gbt.hpp"

namespace edgescore::astore {

std::vector<std::uint8_t> encode_gbt(const gbt::GbtModel& model);
gbt::GbtModel decode_gbt(std::span<const std::uint8_t> payload);

std::vector<std::uint8_t> encode_capsnet(const capsnet::CapsNetModel& model);
capsnet::CapsNetModel decode_capsnet(std::span<const std::uint8_t> payload);

// Full container for a trained model: metadata, the training parameters as
// string pairs, the feature schema, the {P_<target>, I_<target>} output
// schema, and the encoded payload.
std::vector<std::uint8_t> export_gbt(const gbt::GbtModel& model,
                                     const std::vector<tabular::VariableSpec>& feature_specs,
                                     const std::string& name, const std::string& description,
                                     std::int64_t timestamp, const std::string& target_name);

// Feature schema comes from the model's own standardizer.
std::vector<std::uint8_t> export_capsnet(const capsnet::CapsNetModel& model,
                                         const std::string& name, const std::string& description,
                                         std::int64_t timestamp, const std::string& target_name);

std::vector<tabular::VariableSpec> score_output_vars(const std::string& target_name);

} // namespace edgescore::astore
