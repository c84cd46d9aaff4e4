// Copyright 2026 The myolo Authors
// SPDX-License-Identifier: Apache-2.0

#include "myolo/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "myolo/serialize.hpp"

namespace myolo {

namespace {

void append_le(std::string& out, double value) {
  const auto bits = std::bit_cast<std::uint64_t>(value);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
}

double read_le(const char* p) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[b])) << (8 * b);
  return std::bit_cast<double>(bits);
}

std::string shape_token(const Shape& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "x" : "") + std::to_string(shape[i]);
  return s;
}

Shape parse_shape_token(const std::string& token) {
  Shape shape;
  std::stringstream ss(token);
  std::string part;
  while (std::getline(ss, part, 'x')) shape.push_back(std::stoi(part));
  return shape;
}

class LineReader {
 public:
  explicit LineReader(const std::string& bytes) : bytes_(bytes) {}

  std::string next(const char* what) {
    const auto end = bytes_.find('\n', pos_);
    if (end == std::string::npos) throw Error(std::string("checkpoint: truncated before ") + what);
    std::string line = bytes_.substr(pos_, end - pos_);
    pos_ = end + 1;
    return line;
  }

  std::string keyed(const std::string& key) {
    std::string line = next(key.c_str());
    if (line.rfind(key + " ", 0) != 0) throw Error("checkpoint: expected '" + key + "' line");
    return line.substr(key.size() + 1);
  }

  std::size_t position() const { return pos_; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  ckpt.state.validate();
  Json meta{{"epochs", ckpt.meta.epochs}, {"loss_curve", Json::array()}};
  for (const EpochLoss& e : ckpt.meta.loss_curve) {
    meta["loss_curve"].push_back(
        {e.epoch, e.loss.total, e.loss.coord, e.loss.conf_pos, e.loss.conf_neg, e.loss.cls});
  }
  const Json header{{"model", to_json(ckpt.state.config)}, {"priors", to_json(ckpt.priors)}, {"meta", meta}};

  std::string out = std::string(kCheckpointTag) + "\n";
  out += "config " + canonical(header) + "\n";
  out += "hash " + config_hash(ckpt.state.config) + "\n";
  out += "tensors " + std::to_string(ckpt.state.params.size()) + "\n";
  std::size_t offset = 0;
  for (const auto& [name, t] : ckpt.state.params) {
    out += name + " " + std::to_string(offset) + " " + shape_token(t.shape()) + "\n";
    offset += static_cast<std::size_t>(t.size()) * 8;
  }
  out += "payload " + std::to_string(offset) + "\n";
  out.reserve(out.size() + offset);
  for (const auto& [name, t] : ckpt.state.params) {
    for (Index n = 0; n < t.size(); ++n) append_le(out, t[n]);
  }
  return out;
}

namespace {

Checkpoint parse_impl(const std::string& bytes, const std::optional<ModelConfig>& expected) {
  LineReader reader(bytes);
  const std::string tag = reader.next("format tag");
  if (tag != kCheckpointTag) {
    if (tag.rfind("MYOLO", 0) == 0) {
      throw Error("checkpoint: unsupported format version '" + tag + "' (this build reads " +
                  kCheckpointTag + ")");
    }
    throw Error("checkpoint: not a myolo checkpoint");
  }
  Json header;
  try {
    header = Json::parse(reader.keyed("config"));
  } catch (const Json::exception& e) {
    throw Error(std::string("checkpoint: malformed config header: ") + e.what());
  }
  Checkpoint ckpt;
  ckpt.state.config = model_config_from_json(header.at("model"));
  ckpt.priors = anchor_set_from_json(header.at("priors"), ckpt.state.config.anchors_per_cell);
  try {
    const Json& meta = header.at("meta");
    ckpt.meta.epochs = meta.at("epochs").get<int>();
    for (const Json& row : meta.at("loss_curve")) {
      EpochLoss e;
      e.epoch = row.at(0).get<int>();
      e.loss = {row.at(1).get<double>(), row.at(2).get<double>(), row.at(3).get<double>(),
                row.at(4).get<double>(), row.at(5).get<double>()};
      ckpt.meta.loss_curve.push_back(e);
    }
  } catch (const Json::exception& e) {
    throw Error(std::string("checkpoint: malformed training metadata: ") + e.what());
  }
  const std::string hash = reader.keyed("hash");
  if (hash != config_hash(ckpt.state.config)) throw Error("checkpoint: config hash does not match header");
  if (expected && config_hash(*expected) != hash) {
    throw Error("checkpoint: built for config " + hash + " but the model expects config " +
                config_hash(*expected));
  }

  struct Entry {
    std::string name;
    std::size_t offset;
    Shape shape;
  };
  std::vector<Entry> table;
  const long count = std::stol(reader.keyed("tensors"));
  for (long n = 0; n < count; ++n) {
    std::istringstream line(reader.next("tensor table"));
    Entry e;
    std::string shape;
    if (!(line >> e.name >> e.offset >> shape)) throw Error("checkpoint: malformed tensor table");
    e.shape = parse_shape_token(shape);
    table.push_back(std::move(e));
  }
  const std::size_t payload = std::stoull(reader.keyed("payload"));
  const std::size_t start = reader.position();
  if (bytes.size() - start != payload) {
    throw Error("checkpoint: payload holds " + std::to_string(bytes.size() - start) + " bytes, header declares " +
                std::to_string(payload) + " (truncated or corrupt file)");
  }
  for (const Entry& e : table) {
    const std::size_t len = static_cast<std::size_t>(shape_size(e.shape)) * 8;
    if (e.offset + len > payload) throw Error("checkpoint: tensor '" + e.name + "' runs past the payload");
    Tensor t(e.shape);
    const char* p = bytes.data() + start + e.offset;
    for (Index n = 0; n < t.size(); ++n) t[n] = read_le(p + 8 * n);
    ckpt.state.params.emplace(e.name, std::move(t));
  }
  ckpt.state.validate();
  return ckpt;
}

}  // namespace

Checkpoint parse_checkpoint(const std::string& bytes, const std::optional<ModelConfig>& expected) {
  try {
    return parse_impl(bytes, expected);
  } catch (const Json::exception& e) {
    throw Error(std::string("checkpoint: malformed header: ") + e.what());
  } catch (const std::logic_error& e) {
    throw Error(std::string("checkpoint: malformed header field: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("checkpoint: cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("checkpoint: write to '" + path.string() + "' failed");
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::optional<ModelConfig>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("checkpoint: cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_checkpoint(buf.str(), expected);
}

}  // namespace myolo
