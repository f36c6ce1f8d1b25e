#include "cpgnn/checkpoint.hpp"

#include "cpgnn/binary_io.hpp"
#include "cpgnn/error.hpp"

namespace cpgnn {

namespace {

constexpr std::string_view kMagic{"CPGNNCK\0", 8};
constexpr std::uint32_t kVersion = 1;

void put_tensor(BinaryWriter& w, const Tensor& t) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) w.put<std::uint64_t>(d);
  w.put_array(t.ptr(), t.numel());
}

Tensor get_tensor(BinaryReader& r) {
  const auto rank = r.get<std::uint32_t>();
  if (rank > 8) throw DataError("corrupt tensor rank in " + r.path().string());
  Shape shape(rank);
  std::uint64_t numel = 1;
  for (auto& d : shape) {
    d = static_cast<std::size_t>(r.get<std::uint64_t>());
    numel *= d;
    if (numel > (std::uint64_t{1} << 34)) throw DataError("corrupt tensor shape in " + r.path().string());
  }
  Tensor t(shape);
  r.get_array(t.ptr(), t.numel());
  return t;
}

}  // namespace

std::vector<NamedTensor> snapshot_parameters(Model& model) {
  std::vector<NamedTensor> out;
  for (Parameter* p : model.parameters()) out.push_back({p->name, p->value});
  return out;
}

void load_parameters(Model& model, const std::vector<NamedTensor>& params) {
  const auto targets = model.parameters();
  if (targets.size() != params.size()) {
    throw DataError("checkpoint has " + std::to_string(params.size()) + " parameters, model expects " +
                    std::to_string(targets.size()));
  }
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i]->name != params[i].name || targets[i]->value.shape() != params[i].value.shape()) {
      throw DataError("checkpoint parameter " + params[i].name + " " + shape_str(params[i].value.shape()) +
                      " does not match model parameter " + targets[i]->name + " " +
                      shape_str(targets[i]->value.shape()));
    }
    targets[i]->value = params[i].value;
  }
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  BinaryWriter w(path);
  w.put_bytes(kMagic);
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint8_t>(sizeof(Real));
  w.put<std::uint64_t>(ckpt.config_digest);
  w.put<std::uint64_t>(ckpt.kg_digest);
  w.put_string(ckpt.config_text);
  w.put<std::uint64_t>(ckpt.parameters.size());
  for (const auto& p : ckpt.parameters) {
    w.put_string(p.name);
    put_tensor(w, p.value);
  }
  w.put<std::uint8_t>(ckpt.optimizer == OptimizerKind::kAdam ? 1 : 0);
  w.put<std::uint64_t>(ckpt.optimizer_state.steps);
  w.put<std::uint64_t>(ckpt.optimizer_state.first_moment.size());
  for (std::size_t i = 0; i < ckpt.optimizer_state.first_moment.size(); ++i) {
    put_tensor(w, ckpt.optimizer_state.first_moment[i]);
    put_tensor(w, ckpt.optimizer_state.second_moment.at(i));
  }
  const TrainerState& s = ckpt.trainer;
  w.put(s.epoch);
  w.put(s.cursor);
  w.put(s.global_step);
  w.put(s.epoch_loss_sum);
  w.put(s.best_valid_mrr);
  w.put(s.best_epoch);
  w.put<std::uint64_t>(ckpt.best_parameters.size());
  for (const auto& p : ckpt.best_parameters) {
    w.put_string(p.name);
    put_tensor(w, p.value);
  }
  w.finish();
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  BinaryReader r(path);
  r.expect_magic(kMagic);
  if (const auto v = r.get<std::uint32_t>(); v != kVersion) {
    throw DataError("checkpoint version " + std::to_string(v) + " is not supported (expected " +
                    std::to_string(kVersion) + ")");
  }
  if (const auto width = r.get<std::uint8_t>(); width != sizeof(Real)) {
    throw DataError("checkpoint stores " + std::to_string(width * 8) + "-bit reals, this build uses " +
                    std::to_string(sizeof(Real) * 8));
  }
  Checkpoint c;
  c.config_digest = r.get<std::uint64_t>();
  c.kg_digest = r.get<std::uint64_t>();
  c.config_text = r.get_string();
  const auto n = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < n; ++i) {
    NamedTensor p;
    p.name = r.get_string(4096);
    p.value = get_tensor(r);
    c.parameters.push_back(std::move(p));
  }
  c.optimizer = r.get<std::uint8_t>() ? OptimizerKind::kAdam : OptimizerKind::kSgd;
  c.optimizer_state.steps = r.get<std::uint64_t>();
  const auto moments = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < moments; ++i) {
    c.optimizer_state.first_moment.push_back(get_tensor(r));
    c.optimizer_state.second_moment.push_back(get_tensor(r));
  }
  TrainerState& s = c.trainer;
  s.epoch = r.get<std::uint64_t>();
  s.cursor = r.get<std::uint64_t>();
  s.global_step = r.get<std::uint64_t>();
  s.epoch_loss_sum = r.get<double>();
  s.best_valid_mrr = r.get<double>();
  s.best_epoch = r.get<std::int64_t>();
  const auto nb = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < nb; ++i) {
    NamedTensor p;
    p.name = r.get_string(4096);
    p.value = get_tensor(r);
    c.best_parameters.push_back(std::move(p));
  }
  if (!r.at_end()) throw DataError("trailing bytes in checkpoint " + path.string());
  return c;
}

}  // namespace cpgnn
