#include "sfp/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "sfp/data.hpp"
#include "sfp/error.hpp"

namespace sfp {

namespace {

void dump_value(const Json& j, std::string& out, int indent, int depth) {
    const std::string pad = indent > 0 ? "\n" + std::string(static_cast<std::size_t>(indent * (depth + 1)), ' ') : "";
    const std::string pad_close = indent > 0 ? "\n" + std::string(static_cast<std::size_t>(indent * depth), ' ') : "";
    switch (j.type()) {
        case Json::value_t::object: {
            out.push_back('{');
            bool first = true;
            for (auto it = j.cbegin(); it != j.cend(); ++it) {
                if (!first) out.push_back(',');
                first = false;
                out += pad;
                out += Json(it.key()).dump();
                out.push_back(':');
                if (indent > 0) out.push_back(' ');
                dump_value(it.value(), out, indent, depth + 1);
            }
            if (!first) out += pad_close;
            out.push_back('}');
            break;
        }
        case Json::value_t::array: {
            out.push_back('[');
            bool first = true;
            for (const auto& v : j) {
                if (!first) out.push_back(',');
                first = false;
                out += pad;
                dump_value(v, out, indent, depth + 1);
            }
            if (!first) out += pad_close;
            out.push_back(']');
            break;
        }
        case Json::value_t::number_float: {
            const double v = j.get<double>();
            if (!std::isfinite(v)) {
                out += "null";
                break;
            }
            char buf[40];
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            out += buf;
            // keep floats distinguishable from integers on re-read
            if (std::string_view(buf).find_first_of(".eE") == std::string_view::npos) out += ".0";
            break;
        }
        default:
            out += j.dump();
            break;
    }
}

} // namespace

std::string canonical_dump(const Json& j, int indent) {
    std::string out;
    dump_value(j, out, indent, 0);
    out.push_back('\n');
    return out;
}

void write_report(const Json& report, const std::string& path) {
    if (!report.is_object()) throw SchemaError("write_report: report must be an object");
    Json doc = report;
    doc["schema_version"] = kSchemaVersion;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("write_report: cannot open " + path);
    out << canonical_dump(doc, 2);
}

Json read_report(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("read_report: cannot open " + path);
    Json doc;
    try {
        in >> doc;
    } catch (const std::exception& e) {
        throw SchemaError(std::string("read_report: parse failure: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("schema_version")) {
        throw SchemaError("read_report: missing schema_version");
    }
    if (doc["schema_version"].get<int>() != kSchemaVersion) {
        throw SchemaError("read_report: unsupported schema_version");
    }
    return doc;
}

std::uint64_t json_digest(const Json& j) {
    const std::string s = canonical_dump(j, 0);
    return fnv1a(s.data(), s.size());
}

std::string hex64(std::uint64_t value) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

} // namespace sfp
