// SPDX-License-Identifier: Apache-2.0
#include "rfscope/io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace rfscope {

size_t NamedTensor::volume() const {
  size_t v = 1;
  for (uint32_t d : dims) v *= d;
  return v;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (!in.good() && !in.eof()) throw IoError("failed reading '" + path + "'");
  return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out.good()) throw IoError("failed writing '" + path + "'");
}

namespace {

constexpr char kMagic[4] = {'R', 'F', 'S', 'W'};
constexpr uint32_t kVersion = 1;

void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
  const std::string& buf;
  size_t pos = 0;

  void need(size_t n) const {
    if (pos + n > buf.size()) throw IoError("tensor file truncated");
  }
  uint8_t u8() {
    need(1);
    return static_cast<uint8_t>(buf[pos++]);
  }
  uint16_t u16() {
    need(2);
    uint16_t v = static_cast<uint8_t>(buf[pos]) |
                 (static_cast<uint16_t>(static_cast<uint8_t>(buf[pos + 1])) << 8);
    pos += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[pos + i])) << (8 * i);
    }
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<uint64_t>(static_cast<uint8_t>(buf[pos + i])) << (8 * i);
    }
    pos += 8;
    return v;
  }
  std::string bytes(size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

void write_tensor_file(const std::string& path,
                       const std::vector<NamedTensor>& tensors) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<uint32_t>(tensors.size()));
  for (const NamedTensor& t : tensors) {
    if (t.name.size() > 0xffff) throw IoError("tensor name too long");
    if (t.data.size() != t.volume()) {
      throw IoError("tensor '" + t.name + "' data length does not match dims");
    }
    put_u16(out, static_cast<uint16_t>(t.name.size()));
    out += t.name;
    out.push_back(static_cast<char>(t.dims.size()));
    for (uint32_t d : t.dims) put_u32(out, d);
    for (double v : t.data) put_u64(out, std::bit_cast<uint64_t>(v));
  }
  write_file(path, out);
}

std::vector<NamedTensor> read_tensor_file(const std::string& path) {
  const std::string buf = read_file(path);
  Reader r{buf};
  if (r.bytes(4) != std::string(kMagic, 4)) {
    throw IoError("'" + path + "' is not a tensor container (bad magic)");
  }
  if (r.u32() != kVersion) throw IoError("unsupported tensor container version");
  const uint32_t count = r.u32();
  std::vector<NamedTensor> tensors;
  tensors.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.bytes(r.u16());
    const uint8_t rank = r.u8();
    t.dims.resize(rank);
    for (auto& d : t.dims) d = r.u32();
    t.data.resize(t.volume());
    for (double& v : t.data) v = std::bit_cast<double>(r.u64());
    tensors.push_back(std::move(t));
  }
  return tensors;
}

std::vector<NamedTensor> weights_to_tensors(const ArchGraph& graph,
                                            const WeightSet& weights) {
  std::vector<NamedTensor> out;
  for (const auto& [id, n] : graph.nodes) {
    if (n.kind == NodeKind::conv) {
      auto it = weights.conv.find(id);
      if (it == weights.conv.end()) throw IoError("missing weights for '" + id + "'");
      const ConvWeights& w = it->second;
      out.push_back({id + "/weight",
                     {static_cast<uint32_t>(w.out_channels),
                      static_cast<uint32_t>(w.in_per_group),
                      static_cast<uint32_t>(w.kernel.freq),
                      static_cast<uint32_t>(w.kernel.time)},
                     w.w});
      out.push_back(
          {id + "/bias", {static_cast<uint32_t>(w.out_channels)}, w.bias});
    } else if (n.kind == NodeKind::affine) {
      auto it = weights.affine.find(id);
      if (it == weights.affine.end()) throw IoError("missing affine parameters for '" + id + "'");
      out.push_back({id + "/scale",
                     {static_cast<uint32_t>(it->second.scale.size())},
                     it->second.scale});
      out.push_back({id + "/shift",
                     {static_cast<uint32_t>(it->second.shift.size())},
                     it->second.shift});
    }
  }
  return out;
}

WeightSet weights_from_tensors(const ArchGraph& graph,
                               const std::vector<NamedTensor>& tensors) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : tensors) by_name.emplace(t.name, &t);
  auto get = [&](const std::string& name) -> const NamedTensor& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw IoError("container lacks tensor '" + name + "'");
    return *it->second;
  };

  WeightSet ws;
  for (const auto& [id, n] : graph.nodes) {
    if (n.kind == NodeKind::conv) {
      const NamedTensor& wt = get(id + "/weight");
      const NamedTensor& bt = get(id + "/bias");
      if (wt.dims.size() != 4 || bt.dims.size() != 1) {
        throw IoError("tensor ranks for conv '" + id + "' are wrong");
      }
      ConvWeights w;
      w.out_channels = static_cast<int>(wt.dims[0]);
      w.in_per_group = static_cast<int>(wt.dims[1]);
      w.kernel = {static_cast<int>(wt.dims[2]), static_cast<int>(wt.dims[3])};
      w.w = wt.data;
      w.bias = bt.data;
      if (w.out_channels != n.out_channels ||
          w.in_per_group != n.in_channels / n.groups || !(w.kernel == n.kernel)) {
        throw IoError("stored weights for conv '" + id +
                      "' do not match the graph");
      }
      ws.conv.emplace(id, std::move(w));
    } else if (n.kind == NodeKind::affine) {
      const NamedTensor& sc = get(id + "/scale");
      const NamedTensor& sh = get(id + "/shift");
      if (sc.data.size() != static_cast<size_t>(n.in_channels) ||
          sh.data.size() != sc.data.size()) {
        throw IoError("stored affine parameters for '" + id +
                      "' do not match the graph");
      }
      ws.affine.emplace(id, AffineParams{sc.data, sh.data});
    }
  }
  return ws;
}

void write_weights_file(const std::string& path, const ArchGraph& graph,
                        const WeightSet& weights) {
  write_tensor_file(path, weights_to_tensors(graph, weights));
}

WeightSet read_weights_file(const std::string& path, const ArchGraph& graph) {
  return weights_from_tensors(graph, read_tensor_file(path));
}

void write_input_file(const std::string& path, const Tensor& input) {
  NamedTensor t;
  t.name = "input";
  t.dims = {static_cast<uint32_t>(input.shape.channels),
            static_cast<uint32_t>(input.shape.freq),
            static_cast<uint32_t>(input.shape.time)};
  t.data = input.data;
  write_tensor_file(path, {t});
}

Tensor read_input_file(const std::string& path) {
  const std::string head = read_file(path);
  if (head.size() >= 4 && head.compare(0, 4, kMagic, 4) == 0) {
    for (const auto& t : read_tensor_file(path)) {
      if (t.name != "input") continue;
      TensorShape shape;
      if (t.dims.size() == 3) {
        shape = {static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]),
                 static_cast<int>(t.dims[2])};
      } else if (t.dims.size() == 2) {
        shape = {1, static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1])};
      } else {
        throw IoError("tensor 'input' in '" + path + "' must have rank 2 or 3");
      }
      Tensor out(shape);
      out.data = t.data;
      return out;
    }
    throw IoError("'" + path + "' contains no tensor named 'input'");
  }
  return tensor_from_csv(head);
}

std::string matrix_to_csv(int rows, int cols, const double* values) {
  std::string out;
  out.reserve(static_cast<size_t>(rows) * cols * 12);
  char buf[64];
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", values[static_cast<size_t>(r) * cols + c]);
      if (c) out.push_back(',');
      out += buf;
    }
    out.push_back('\n');
  }
  return out;
}

Tensor tensor_from_csv(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    size_t start = 0;
    while (start <= line.size()) {
      size_t end = line.find(',', start);
      if (end == std::string::npos) end = line.size();
      try {
        row.push_back(std::stod(line.substr(start, end - start)));
      } catch (const std::exception&) {
        throw IoError("CSV parse error in row " + std::to_string(rows.size() + 1));
      }
      start = end + 1;
      if (end == line.size()) break;
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw IoError("CSV rows have inconsistent column counts");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("CSV input is empty");

  Tensor out(TensorShape{1, static_cast<int>(rows.size()),
                         static_cast<int>(rows.front().size())});
  size_t i = 0;
  for (const auto& row : rows) {
    for (double v : row) out.data[i++] = v;
  }
  return out;
}

}  // namespace rfscope
