#include "wm/nn/arch.hpp"

#include <sstream>

namespace wm {

void ArchitectureSpec::validate() const {
  if (input.size() <= 0) throw ArchitectureError("architecture input shape is empty");
  if (num_classes <= 0) throw ArchitectureError("num_classes must be positive");
  if (layers.empty()) throw ArchitectureError("architecture has no layers");
  const LayerDesc& head = layers.back();
  if (head.kind != LayerKind::kDense || head.units != num_classes) {
    throw ArchitectureError("head layer must be dense with width num_classes");
  }
  if (!last_conv_tap.empty()) {
    int idx = layer_index(last_conv_tap);
    if (idx < 0 || layers[static_cast<std::size_t>(idx)].kind != LayerKind::kConv) {
      throw ArchitectureError("last_conv_tap does not name a convolution layer: " + last_conv_tap);
    }
  }
  for (const LayerDesc& l : layers) {
    switch (l.kind) {
      case LayerKind::kConv:
        if (l.filters <= 0 || l.kernel <= 0) throw ArchitectureError("bad conv layer " + l.name);
        break;
      case LayerKind::kMaxPool:
        if (l.pool <= 1) throw ArchitectureError("bad pool layer " + l.name);
        break;
      case LayerKind::kDense:
        if (l.units <= 0) throw ArchitectureError("bad dense layer " + l.name);
        break;
    }
  }
}

int ArchitectureSpec::layer_index(const std::string& name) const {
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].name == name) return static_cast<int>(i);
  return -1;
}

std::string ArchitectureSpec::serialize() const {
  std::ostringstream os;
  os << "input=" << input.str() << "\n";
  os << "num_classes=" << num_classes << "\n";
  os << "tap=" << last_conv_tap << "\n";
  for (const LayerDesc& l : layers) {
    switch (l.kind) {
      case LayerKind::kConv:
        os << "layer=conv " << l.name << " filters=" << l.filters << " kernel=" << l.kernel
           << " relu=" << (l.relu ? 1 : 0) << "\n";
        break;
      case LayerKind::kMaxPool:
        os << "layer=pool " << l.name << " window=" << l.pool << "\n";
        break;
      case LayerKind::kDense:
        os << "layer=dense " << l.name << " units=" << l.units << " relu=" << (l.relu ? 1 : 0)
           << "\n";
        break;
    }
  }
  return os.str();
}

namespace {

std::pair<std::string, std::string> split_kv(const std::string& tok) {
  auto eq = tok.find('=');
  if (eq == std::string::npos) throw DecodeError("expected key=value token: " + tok);
  return {tok.substr(0, eq), tok.substr(eq + 1)};
}

}  // namespace

ArchitectureSpec ArchitectureSpec::parse(const std::string& text) {
  ArchitectureSpec spec;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto [key, value] = split_kv(line);
    if (key == "input") {
      spec.input = ImageShape::parse(value);
    } else if (key == "num_classes") {
      spec.num_classes = std::stoi(value);
    } else if (key == "tap") {
      spec.last_conv_tap = value;
    } else if (key == "layer") {
      std::istringstream ls(value);
      std::string kind, name, tok;
      ls >> kind >> name;
      LayerDesc l;
      l.name = name;
      if (kind == "conv") {
        l.kind = LayerKind::kConv;
      } else if (kind == "pool") {
        l.kind = LayerKind::kMaxPool;
      } else if (kind == "dense") {
        l.kind = LayerKind::kDense;
      } else {
        throw DecodeError("unknown layer kind: " + kind);
      }
      while (ls >> tok) {
        auto [k, v] = split_kv(tok);
        if (k == "filters") l.filters = std::stoi(v);
        else if (k == "kernel") l.kernel = std::stoi(v);
        else if (k == "window") l.pool = std::stoi(v);
        else if (k == "units") l.units = std::stoi(v);
        else if (k == "relu") l.relu = std::stoi(v) != 0;
        else throw DecodeError("unknown layer attribute: " + k);
      }
      spec.layers.push_back(l);
    } else {
      throw DecodeError("unknown architecture key: " + key);
    }
  }
  spec.validate();
  return spec;
}

ArchitectureSpec desk_arch(int num_classes, ImageShape input) {
  ArchitectureSpec spec;
  spec.input = input;
  spec.num_classes = num_classes;
  spec.layers = {
      {LayerKind::kConv, "conv1", 16, 3, 0, 0, true},
      {LayerKind::kMaxPool, "pool1", 0, 0, 2, 0, false},
      {LayerKind::kConv, "conv2", 32, 3, 0, 0, true},
      {LayerKind::kMaxPool, "pool2", 0, 0, 2, 0, false},
      {LayerKind::kDense, "fc1", 0, 0, 0, 128, true},
      {LayerKind::kDense, "fc2", 0, 0, 0, num_classes, false},
  };
  spec.last_conv_tap = "conv2";
  spec.validate();
  return spec;
}

std::string model_role_name(ModelRole role) {
  switch (role) {
    case ModelRole::kClean:
      return "CLEAN";
    case ModelRole::kMarked:
      return "MARKED";
    case ModelRole::kAttack:
      return "ATTACK";
    case ModelRole::kDetector:
      return "DETECTOR";
  }
  return "CLEAN";
}

ModelRole model_role_from_name(const std::string& name) {
  if (name == "CLEAN") return ModelRole::kClean;
  if (name == "MARKED") return ModelRole::kMarked;
  if (name == "ATTACK") return ModelRole::kAttack;
  if (name == "DETECTOR") return ModelRole::kDetector;
  throw DecodeError("unknown model role: " + name);
}

}  // namespace wm
