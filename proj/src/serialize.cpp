#include "looptune/serialize.hpp"

namespace looptune {

const char* to_string(AccessKind kind) noexcept
{
    switch (kind) {
    case AccessKind::Read: return "r";
    case AccessKind::Write: return "w";
    case AccessKind::ReadWrite: return "rw";
    }
    return "?";
}

AccessKind access_kind_from_string(const std::string& s)
{
    if (s == "r")
        return AccessKind::Read;
    if (s == "w")
        return AccessKind::Write;
    if (s == "rw")
        return AccessKind::ReadWrite;
    fail(ErrorCode::InvalidArgument, "unknown access kind '" + s + "'");
}

Json to_json(const LoopNest& nest)
{
    Json j;
    j["op"] = "mac";
    j["parameters"] = Json::array();
    for (const auto& p : nest.parameters())
        j["parameters"].push_back({{"name", p.name}, {"value", p.value}});
    j["loops"] = Json::array();
    for (const auto& l : nest.loops()) {
        Json upper = Json::array();
        for (const auto& u : l.upper)
            upper.push_back(u.to_string());
        j["loops"].push_back({{"iterator", l.iterator},
                              {"lower", l.lower.to_string()},
                              {"upper", upper},
                              {"step", l.step}});
    }
    j["arrays"] = Json::array();
    for (const auto& a : nest.arrays()) {
        Json extents = Json::array();
        for (const auto& e : a.extents)
            extents.push_back(e.to_string());
        j["arrays"].push_back({{"name", a.name}, {"extents", extents}});
    }
    j["refs"] = Json::array();
    for (const auto& r : nest.refs()) {
        Json indices = Json::array();
        for (const auto& e : r.indices)
            indices.push_back(e.to_string());
        j["refs"].push_back({{"array", r.array}, {"kind", to_string(r.kind)}, {"indices", indices}});
    }
    return j;
}

LoopNest loopnest_from_json(const Json& j)
{
    try {
        if (j.value("op", std::string("mac")) != "mac")
            fail(ErrorCode::InvalidArgument, "only the 'mac' statement is supported");
        std::vector<Parameter> params;
        for (const auto& p : j.at("parameters"))
            params.push_back({p.at("name").get<std::string>(), p.at("value").get<std::int64_t>()});
        std::vector<Loop> loops;
        for (const auto& l : j.at("loops")) {
            Loop loop;
            loop.iterator = l.at("iterator").get<std::string>();
            loop.lower = AffineExpr::parse(l.at("lower").get<std::string>());
            for (const auto& u : l.at("upper"))
                loop.upper.push_back(AffineExpr::parse(u.get<std::string>()));
            loop.step = l.value("step", std::int64_t{1});
            loops.push_back(std::move(loop));
        }
        std::vector<ArrayDecl> arrays;
        for (const auto& a : j.at("arrays")) {
            ArrayDecl decl{a.at("name").get<std::string>(), {}};
            for (const auto& e : a.at("extents"))
                decl.extents.push_back(AffineExpr::parse(e.get<std::string>()));
            arrays.push_back(std::move(decl));
        }
        std::vector<ArrayRef> refs;
        for (const auto& r : j.at("refs")) {
            ArrayRef ref{r.at("array").get<std::string>(),
                         access_kind_from_string(r.at("kind").get<std::string>()),
                         {}};
            for (const auto& e : r.at("indices"))
                ref.indices.push_back(AffineExpr::parse(e.get<std::string>()));
            refs.push_back(std::move(ref));
        }
        return LoopNest(std::move(loops), std::move(arrays), std::move(refs), std::move(params));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidArgument, std::string("malformed loop nest JSON: ") + e.what());
    }
}

} // namespace looptune
