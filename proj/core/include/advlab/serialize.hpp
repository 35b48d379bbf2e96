#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "advlab/dataset.hpp"
#include "advlab/harness.hpp"
#include "advlab/nn.hpp"

namespace advlab {

// JSON documents tagged with a leading "schema" field:
//   advlab.net/1, advlab.pipeline/1, advlab.dataset/1.
// Doubles are written in shortest round-trip form, so save/load is exact.
// Malformed or mismatched documents raise FormatError.

std::string serialize_net(const FeedForwardNet& net);
FeedForwardNet parse_net(std::string_view text);

std::string serialize_pipeline(const DefendedClassifier& dc);
DefendedClassifier parse_pipeline(std::string_view text);

std::string serialize_dataset(const LabeledDataset& d);
LabeledDataset parse_dataset(std::string_view text);

std::string report_metadata_json(const ExperimentReport& r);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

// Reads the schema tag without validating the rest of the document.
std::string document_schema(std::string_view text);

}  // namespace advlab
