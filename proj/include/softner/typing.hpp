#pragma once

#include <string>
#include <vector>

#include "softner/common.hpp"

namespace softner::typing {

/// Value data types. Declaration order is the classification precedence
/// order (complex types first) and the tie-break order everywhere.
enum class DataType {
  Guid,
  Uri,
  IpAddress,
  Boolean,
  Numeric,
  Alphabetical,
  NonAlphanumeric,
  Alphanumeric,
  Other,
};

inline constexpr int kDataTypeCount = 9;

const char* to_string(DataType t);
DataType data_type_from_string(const std::string& s);

/// Classifies a trimmed, non-empty value string. Patterns are tested in
/// precedence order; first match wins. Throws Error on an empty value.
DataType classify_value(const std::string& value);

/// Modal data type of a non-empty list; ties broken by precedence order.
DataType resolve_entity_dtype(const std::vector<DataType>& instances);

}  // namespace softner::typing
