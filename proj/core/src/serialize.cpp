#include "advlab/serialize.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

#include <nlohmann/json.hpp>

#include "advlab/error.hpp"

namespace advlab {
namespace {

using json = nlohmann::ordered_json;

constexpr std::string_view kNetSchema = "advlab.net/1";
constexpr std::string_view kPipelineSchema = "advlab.pipeline/1";
constexpr std::string_view kDatasetSchema = "advlab.dataset/1";

json parse_document(std::string_view text, std::string_view schema) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("schema") || !doc["schema"].is_string()) {
    throw FormatError("document has no schema tag");
  }
  if (doc["schema"].get<std::string>() != schema) {
    throw FormatError("expected schema " + std::string(schema) + ", found " +
                      doc["schema"].get<std::string>());
  }
  return doc;
}

template <typename T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) throw FormatError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad field '") + key + "': " + e.what());
  }
}

json matrix_to_json(const DenseMatrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.values()}};
}

DenseMatrix matrix_from_json(const json& j) {
  auto rows = field<std::size_t>(j, "rows");
  auto cols = field<std::size_t>(j, "cols");
  auto data = field<std::vector<double>>(j, "data");
  try {
    return DenseMatrix(rows, cols, std::move(data));
  } catch (const Error& e) {
    throw FormatError(std::string("bad matrix: ") + e.what());
  }
}

json net_to_json(const FeedForwardNet& net) {
  json layers = json::array();
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    layers.push_back({{"weights", matrix_to_json(net.weights[l])}, {"bias", net.biases[l]}});
  }
  return {{"layer_sizes", net.layer_sizes},
          {"hidden_activation", net.hidden_activation == Activation::relu ? "relu" : "identity"},
          {"output", net.output == OutputKind::softmax ? "softmax" : "linear"},
          {"layers", layers}};
}

FeedForwardNet net_from_json(const json& j) {
  FeedForwardNet net;
  net.layer_sizes = field<std::vector<std::size_t>>(j, "layer_sizes");
  const auto act = field<std::string>(j, "hidden_activation");
  if (act == "relu") {
    net.hidden_activation = Activation::relu;
  } else if (act == "identity") {
    net.hidden_activation = Activation::identity;
  } else {
    throw FormatError("unknown activation '" + act + "'");
  }
  const auto out = field<std::string>(j, "output");
  if (out == "softmax") {
    net.output = OutputKind::softmax;
  } else if (out == "linear") {
    net.output = OutputKind::linear;
  } else {
    throw FormatError("unknown output kind '" + out + "'");
  }
  const auto layers = field<json>(j, "layers");
  if (!layers.is_array()) throw FormatError("'layers' must be an array");
  for (const auto& layer : layers) {
    net.weights.push_back(matrix_from_json(field<json>(layer, "weights")));
    net.biases.push_back(field<Vector>(layer, "bias"));
  }
  try {
    net.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("invalid network: ") + e.what());
  }
  return net;
}

json pca_to_json(const PcaModel& m) {
  return {{"mean", m.mean}, {"w", matrix_to_json(m.w)}, {"eigenvalues", m.eigenvalues}};
}

PcaModel pca_from_json(const json& j) {
  PcaModel m{field<Vector>(j, "mean"), matrix_from_json(field<json>(j, "w")),
             field<Vector>(j, "eigenvalues")};
  if (m.mean.size() != m.w.rows() || m.eigenvalues.size() != m.w.rows()) {
    throw FormatError("PCA model: inconsistent lengths");
  }
  return m;
}

json transform_to_json(const TransformModel& t) {
  return std::visit(
      [](const auto& m) -> json {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, NoTransform>) {
          return {{"kind", "none"}};
        } else if constexpr (std::is_same_v<T, PcaModel>) {
          return {{"kind", "pca"}, {"pca", pca_to_json(m)}};
        } else if constexpr (std::is_same_v<T, DlmModel>) {
          return {{"kind", "dlm"},       {"c", matrix_to_json(m.c)},
                  {"p_b", m.p_b},        {"sigma", m.sigma},
                  {"corr_min", m.corr_min}, {"seed", m.seed},
                  {"base_pca", pca_to_json(m.base_pca)}};
        } else {
          return {{"kind", "drlim"}, {"encoder", net_to_json(m.net)}};
        }
      },
      t);
}

TransformModel transform_from_json(const json& j) {
  const auto kind = field<std::string>(j, "kind");
  if (kind == "none") return NoTransform{};
  if (kind == "pca") return pca_from_json(field<json>(j, "pca"));
  if (kind == "dlm") {
    DlmModel m;
    m.c = matrix_from_json(field<json>(j, "c"));
    m.p_b = field<std::size_t>(j, "p_b");
    m.sigma = field<double>(j, "sigma");
    m.corr_min = field<double>(j, "corr_min");
    m.seed = field<std::uint64_t>(j, "seed");
    m.base_pca = pca_from_json(field<json>(j, "base_pca"));
    return m;
  }
  if (kind == "drlim") return SiameseEncoder{net_from_json(field<json>(j, "encoder"))};
  throw FormatError("unknown transform kind '" + kind + "'");
}

}  // namespace

std::string serialize_net(const FeedForwardNet& net) {
  json doc = {{"schema", kNetSchema}};
  doc.update(net_to_json(net));
  return doc.dump() + "\n";
}

FeedForwardNet parse_net(std::string_view text) {
  return net_from_json(parse_document(text, kNetSchema));
}

std::string serialize_pipeline(const DefendedClassifier& dc) {
  json doc = {{"schema", kPipelineSchema},
              {"transform", transform_to_json(dc.transform)},
              {"classifier", net_to_json(dc.classifier)},
              {"train_noise_seed", dc.train_noise_seed},
              {"eval_noise_seed", dc.eval_noise_seed}};
  return doc.dump() + "\n";
}

DefendedClassifier parse_pipeline(std::string_view text) {
  const json doc = parse_document(text, kPipelineSchema);
  DefendedClassifier dc{transform_from_json(field<json>(doc, "transform")),
                        net_from_json(field<json>(doc, "classifier")),
                        field<std::uint64_t>(doc, "train_noise_seed"),
                        field<std::uint64_t>(doc, "eval_noise_seed")};
  try {
    dc.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("invalid pipeline: ") + e.what());
  }
  return dc;
}

std::string serialize_dataset(const LabeledDataset& d) {
  json doc = {{"schema", kDatasetSchema},
              {"num_classes", d.num_classes()},
              {"labels", d.labels()},
              {"samples", matrix_to_json(d.samples())}};
  return doc.dump() + "\n";
}

LabeledDataset parse_dataset(std::string_view text) {
  const json doc = parse_document(text, kDatasetSchema);
  try {
    return LabeledDataset(matrix_from_json(field<json>(doc, "samples")),
                          field<Labels>(doc, "labels"), field<int>(doc, "num_classes"));
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError(std::string("invalid dataset: ") + e.what());
  }
}

std::string report_metadata_json(const ExperimentReport& r) {
  json meta = json::object();
  for (const auto& [k, v] : r.metadata) meta[k] = v;
  json doc = {{"schema", "advlab.report/1"},
              {"experiment", r.id},
              {"rows", r.rows.size()},
              {"wall_seconds", r.wall_seconds},
              {"metadata", meta}};
  return doc.dump(2) + "\n";
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error("write failed for " + path.string());
}

std::string document_schema(std::string_view text) {
  try {
    const json doc = json::parse(text.begin(), text.end());
    if (doc.is_object() && doc.contains("schema") && doc["schema"].is_string()) {
      return doc["schema"].get<std::string>();
    }
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("malformed JSON: ") + e.what());
  }
  throw FormatError("document has no schema tag");
}

}  // namespace advlab
