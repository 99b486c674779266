#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "kcflat/checkpoint.hpp"

namespace kcflat::nn {

using nlohmann::json;

namespace {

json node_json(const Node &n) {
  json j;
  j["kind"] = op_name(n.kind);
  j["a"] = n.a;
  j["b"] = n.b;
  j["weight"] = n.weight;
  j["bias"] = n.bias;
  j["conv"] = {{"kernel", n.conv.kernel}, {"stride", n.conv.stride}, {"pad", n.conv.pad}};
  j["in_shape"] = n.in_shape;
  return j;
}

OpKind kind_from_name(const std::string &name) {
  for (int k = 0; k <= int(OpKind::log_softmax); ++k) {
    if (name == op_name(OpKind(k))) return OpKind(k);
  }
  throw std::runtime_error("unknown op kind in checkpoint: " + name);
}

}  // namespace

void save_checkpoint(const std::string &path, const ModelGraph &g,
                     const std::string &meta_json) {
  json manifest;
  manifest["format_version"] = 1;
  auto nodes = json::array();
  for (const Node &n : g.nodes) nodes.push_back(node_json(n));
  manifest["nodes"] = std::move(nodes);
  auto shapes = json::array();
  for (const Tensor &p : g.params) shapes.push_back(p.shape);
  manifest["param_shapes"] = std::move(shapes);
  manifest["input_nodes"] = g.input_nodes;
  manifest["output_node"] = g.output_node;
  manifest["meta"] = meta_json.empty() ? json::object() : json::parse(meta_json);
  const std::string text = manifest.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  const char magic[4] = {'K', 'C', 'N', '1'};
  const std::uint64_t len = text.size();
  f.write(magic, 4);
  f.write(reinterpret_cast<const char *>(&len), 8);
  f.write(text.data(), std::streamsize(text.size()));
  for (const Tensor &p : g.params)
    f.write(reinterpret_cast<const char *>(p.data.data()),
            std::streamsize(p.data.size() * sizeof(double)));
  if (!f) throw std::runtime_error("short write: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string &path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  char magic[4];
  std::uint64_t len = 0;
  f.read(magic, 4);
  f.read(reinterpret_cast<char *>(&len), 8);
  if (!f || std::memcmp(magic, "KCN1", 4) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  if (len == 0 || len > (std::uint64_t(1) << 30))
    throw std::runtime_error("implausible checkpoint manifest size: " + path);
  std::string text(std::size_t(len), '\0');
  f.read(text.data(), std::streamsize(len));
  if (!f) throw std::runtime_error("truncated checkpoint manifest: " + path);
  const json manifest = json::parse(text);

  LoadedCheckpoint out;
  ModelGraph &g = out.graph;
  for (const json &jn : manifest.at("nodes")) {
    Node n;
    n.kind = kind_from_name(jn.at("kind").get<std::string>());
    n.a = jn.at("a").get<int>();
    n.b = jn.at("b").get<int>();
    n.weight = jn.at("weight").get<int>();
    n.bias = jn.at("bias").get<int>();
    n.conv = {jn.at("conv").at("kernel").get<int>(), jn.at("conv").at("stride").get<int>(),
              jn.at("conv").at("pad").get<int>()};
    n.in_shape = jn.at("in_shape").get<std::vector<int>>();
    g.nodes.push_back(std::move(n));
  }
  for (const json &js : manifest.at("param_shapes")) {
    Tensor p(js.get<std::vector<int>>());
    f.read(reinterpret_cast<char *>(p.data.data()),
           std::streamsize(p.data.size() * sizeof(double)));
    g.params.push_back(std::move(p));
  }
  if (!f) throw std::runtime_error("truncated checkpoint blobs: " + path);
  g.input_nodes = manifest.at("input_nodes").get<std::vector<int>>();
  g.output_node = manifest.at("output_node").get<int>();
  out.meta_json = manifest.at("meta").dump();
  return out;
}

}  // namespace kcflat::nn
