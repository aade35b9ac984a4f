#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "stemper/diagnostics.hpp"
#include "stemper/finitelab.hpp"
#include "stemper/ladder.hpp"
#include "stemper/report.hpp"
#include "stemper/tempering.hpp"
#include "stemper/zconst.hpp"

namespace stemper::io {

using Json = nlohmann::ordered_json;

/// JSON has no inf/nan; those become the strings "inf", "-inf", "nan".
Json number(double v);

Json to_json(const InequalityRecord& r);
Json to_json(const BoundReport& r);
Json to_json(const ChainSummary& s);
Json to_json(const TraceRecord& r);
Json to_json(const CalibrationReport& r);
Json to_json(const CampaignReport& r);
Json to_json(const ProjectedEstimate& e);
Json to_json(const CounterexampleReport& r);
Json to_json(const MarginalFit& f);
Json to_json(const DesignReport& r);

/// Lowercase hex SHA-256 of a byte string / file contents.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace stemper::io
