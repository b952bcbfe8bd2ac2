#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

namespace sfp {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

// Canonical serialization: keys sorted (nlohmann object order), doubles
// printed with 17 significant digits so write/read round-trips exactly and
// identical reports produce identical bytes.
std::string canonical_dump(const Json& j, int indent = 0);

void write_report(const Json& report, const std::string& path);

/// Parses and checks the schema_version field.
Json read_report(const std::string& path);

std::uint64_t json_digest(const Json& j);
std::string hex64(std::uint64_t value);

} // namespace sfp
