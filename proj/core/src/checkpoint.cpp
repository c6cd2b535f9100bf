#include "marlab/checkpoint.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace marlab {

void save_checkpoint(const std::string& path, const std::string& model_tag, std::uint64_t fingerprint,
                     const ParamStore& params) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out << "marlab-checkpoint 1\n";
  out << "model " << model_tag << "\n";
  char fp[32];
  std::snprintf(fp, sizeof(fp), "%016" PRIx64, fingerprint);
  out << "fingerprint " << fp << "\n";
  for (int pid = 0; pid < params.count(); ++pid) {
    const Tensor& t = params.value(pid);
    out << "tensor " << params.name(pid) << " " << t.ndim();
    for (int d : t.shape()) out << " " << d;
    out << "\n";
    char buf[40];
    for (int i = 0; i < t.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%a", t[i]);
      out << (i ? " " : "") << buf;
    }
    out << "\n";
  }
  out << "end\n";
  if (!out) throw std::runtime_error("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string word;
  int version;
  if (!(in >> word >> version) || word != "marlab-checkpoint" || version != 1) {
    throw std::runtime_error("not a marlab checkpoint: " + path);
  }
  Checkpoint ckpt;
  if (!(in >> word >> ckpt.model_tag) || word != "model") throw std::runtime_error("checkpoint missing model tag");
  std::string fp;
  if (!(in >> word >> fp) || word != "fingerprint") throw std::runtime_error("checkpoint missing fingerprint");
  ckpt.fingerprint = std::stoull(fp, nullptr, 16);

  while (in >> word) {
    if (word == "end") return ckpt;
    if (word != "tensor") throw std::runtime_error("malformed checkpoint near '" + word + "'");
    std::string name;
    int ndim;
    in >> name >> ndim;
    std::vector<int> shape(static_cast<std::size_t>(ndim));
    for (int i = 0; i < ndim; ++i) in >> shape[static_cast<std::size_t>(i)];
    Tensor t(shape);
    for (int i = 0; i < t.size(); ++i) {
      std::string hex;
      if (!(in >> hex)) throw std::runtime_error("checkpoint truncated in tensor " + name);
      t[i] = std::strtod(hex.c_str(), nullptr);
    }
    ckpt.tensors.emplace_back(name, std::move(t));
  }
  throw std::runtime_error("checkpoint missing 'end' marker: " + path);
}

void load_into(ParamStore& params, const Checkpoint& ckpt, const std::string& expected_tag,
               std::uint64_t expected_fingerprint) {
  if (ckpt.model_tag != expected_tag) {
    throw std::runtime_error("checkpoint holds '" + ckpt.model_tag + "', expected '" + expected_tag + "'");
  }
  if (expected_fingerprint != 0 && ckpt.fingerprint != expected_fingerprint) {
    throw std::runtime_error("checkpoint fingerprint mismatch");
  }
  if (static_cast<int>(ckpt.tensors.size()) != params.count()) {
    throw std::runtime_error("checkpoint has " + std::to_string(ckpt.tensors.size()) + " tensors, model expects " +
                             std::to_string(params.count()));
  }
  for (const auto& [name, tensor] : ckpt.tensors) {
    int pid = params.find(name);
    if (pid < 0) throw std::runtime_error("checkpoint tensor '" + name + "' not present in model");
    if (!params.value(pid).same_shape(tensor)) {
      throw std::runtime_error("checkpoint tensor '" + name + "' shape mismatch");
    }
    params.value(pid) = tensor;
  }
}

}  // namespace marlab
