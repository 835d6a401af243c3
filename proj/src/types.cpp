#include "adsched/types.hpp"

#include <string>

namespace adsched {

std::string_view to_string(ColumnKind kind) {
    switch (kind) {
        case ColumnKind::integer: return "integer";
        case ColumnKind::floating: return "float";
        case ColumnKind::string: return "string";
        case ColumnKind::datetime: return "datetime";
        case ColumnKind::boolean: return "boolean";
    }
    return "unknown";
}

ColumnKind column_kind_from_string(std::string_view name) {
    if (name == "integer" || name == "int") return ColumnKind::integer;
    if (name == "float" || name == "double") return ColumnKind::floating;
    if (name == "string") return ColumnKind::string;
    if (name == "datetime") return ColumnKind::datetime;
    if (name == "boolean" || name == "bool") return ColumnKind::boolean;
    throw DataError("unknown column type '" + std::string(name) + "'");
}

std::string_view to_string(BackendKind kind) {
    switch (kind) {
        case BackendKind::inmem: return "inmem";
        case BackendKind::taskpool: return "taskpool";
        case BackendKind::simulated: return "sim";
    }
    return "unknown";
}

BackendKind backend_kind_from_string(std::string_view name) {
    if (name == "inmem") return BackendKind::inmem;
    if (name == "taskpool") return BackendKind::taskpool;
    if (name == "sim" || name == "simulated") return BackendKind::simulated;
    throw std::invalid_argument("unknown backend '" + std::string(name) + "'");
}

}  // namespace adsched
