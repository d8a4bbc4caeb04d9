// Copyright 2026 The seqvc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "seqvc/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "seqvc/error.hpp"

namespace seqvc::io {

namespace {

constexpr char kFeatureMagic[8] = {'S', 'E', 'Q', 'V', 'C', 'F', 'E', 'A'};
constexpr char kCheckpointMagic[8] = {'S', 'E', 'Q', 'V', 'C', 'C', 'K', 'P'};

template <typename T>
void put(std::string& buf, T v) {
  char raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  buf.append(raw, sizeof(T));
}

template <typename T>
T take(const std::string& buf, std::size_t& off, const char* what) {
  if (off + sizeof(T) > buf.size()) throw DataError(std::string("truncated ") + what);
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

std::string read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_all(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write file: " + path);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw DataError("short write: " + path);
}

void append_tensor(std::string& buf, const std::string& name, const Tensor& t) {
  if (name.size() > 0xffff) throw DataError("tensor name too long");
  put<std::uint16_t>(buf, static_cast<std::uint16_t>(name.size()));
  buf.append(name);
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(t.rank()));
  for (int i = 0; i < t.rank(); ++i) put<std::uint32_t>(buf, static_cast<std::uint32_t>(t.dim(i)));
  for (std::int64_t i = 0; i < t.size(); ++i)
    put<float>(buf, static_cast<float>(t.at(i)));
}

std::pair<std::string, Tensor> take_tensor(const std::string& buf, std::size_t& off) {
  auto name_len = take<std::uint16_t>(buf, off, "tensor name");
  if (off + name_len > buf.size()) throw DataError("truncated tensor name");
  std::string name(buf.data() + off, name_len);
  off += name_len;
  auto rank = take<std::uint32_t>(buf, off, "tensor rank");
  if (rank < 1 || rank > 3) throw DataError("bad tensor rank in file");
  std::vector<int> shape;
  std::int64_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    auto d = take<std::uint32_t>(buf, off, "tensor dim");
    shape.push_back(static_cast<int>(d));
    count *= d;
  }
  Tensor t(shape);
  for (std::int64_t i = 0; i < count; ++i) t.at(i) = take<float>(buf, off, "tensor data");
  return {name, std::move(t)};
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double kv_double(const KvMap& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw DataError("missing config key: " + key);
  return std::stod(it->second);
}

int kv_int(const KvMap& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw DataError("missing config key: " + key);
  return std::stoi(it->second);
}

std::uint64_t kv_u64(const KvMap& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw DataError("missing config key: " + key);
  return std::stoull(it->second);
}

}  // namespace

void write_feature_file(const std::string& path, const Tensor& t) {
  std::string buf;
  buf.append(kFeatureMagic, 8);
  put<std::uint32_t>(buf, 1u);  // version
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(t.rank()));
  for (int i = 0; i < t.rank(); ++i) put<std::uint32_t>(buf, static_cast<std::uint32_t>(t.dim(i)));
  for (std::int64_t i = 0; i < t.size(); ++i) put<float>(buf, static_cast<float>(t.at(i)));
  write_all(path, buf);
}

Tensor read_feature_file(const std::string& path) {
  std::string buf = read_all(path);
  if (buf.size() < 16 || std::memcmp(buf.data(), kFeatureMagic, 8) != 0)
    throw DataError("not a feature file: " + path);
  std::size_t off = 8;
  auto version = take<std::uint32_t>(buf, off, "version");
  if (version != 1) throw DataError("unsupported feature file version");
  auto rank = take<std::uint32_t>(buf, off, "rank");
  if (rank < 1 || rank > 3) throw DataError("bad rank in feature file");
  std::vector<int> shape;
  std::int64_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    auto d = take<std::uint32_t>(buf, off, "dim");
    shape.push_back(static_cast<int>(d));
    count *= d;
  }
  Tensor t(shape);
  for (std::int64_t i = 0; i < count; ++i) t.at(i) = take<float>(buf, off, "data");
  if (off != buf.size()) throw DataError("trailing bytes in feature file: " + path);
  return t;
}

void write_wav(const std::string& path, const dsp::Waveform& w) {
  std::string buf;
  const std::uint32_t n = static_cast<std::uint32_t>(w.samples.size());
  const std::uint32_t data_bytes = n * 2;
  buf.append("RIFF", 4);
  put<std::uint32_t>(buf, 36 + data_bytes);
  buf.append("WAVEfmt ", 8);
  put<std::uint32_t>(buf, 16);
  put<std::uint16_t>(buf, 1);  // PCM
  put<std::uint16_t>(buf, 1);  // mono
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(w.sample_rate));
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(w.sample_rate * 2));
  put<std::uint16_t>(buf, 2);
  put<std::uint16_t>(buf, 16);
  buf.append("data", 4);
  put<std::uint32_t>(buf, data_bytes);
  for (double s : w.samples) {
    double c = std::clamp(s, -1.0, 1.0);
    put<std::int16_t>(buf, static_cast<std::int16_t>(std::lround(c * 32767.0)));
  }
  write_all(path, buf);
}

dsp::Waveform read_wav(const std::string& path) {
  std::string buf = read_all(path);
  if (buf.size() < 44 || buf.compare(0, 4, "RIFF") != 0 || buf.compare(8, 4, "WAVE") != 0)
    throw DataError("not a wav file: " + path);
  std::size_t off = 12;
  dsp::Waveform w;
  bool got_fmt = false;
  while (off + 8 <= buf.size()) {
    std::string chunk = buf.substr(off, 4);
    std::size_t o2 = off + 4;
    auto size = take<std::uint32_t>(buf, o2, "chunk size");
    if (chunk == "fmt ") {
      auto fmt_off = o2;
      auto audio_fmt = take<std::uint16_t>(buf, fmt_off, "fmt");
      auto channels = take<std::uint16_t>(buf, fmt_off, "channels");
      auto rate = take<std::uint32_t>(buf, fmt_off, "rate");
      if (audio_fmt != 1 || channels != 1) throw DataError("only mono PCM16 wav supported");
      w.sample_rate = static_cast<int>(rate);
      got_fmt = true;
    } else if (chunk == "data") {
      if (!got_fmt) throw DataError("wav data before fmt chunk");
      std::size_t n = size / 2;
      w.samples.resize(n);
      std::size_t doff = o2;
      for (std::size_t i = 0; i < n; ++i) {
        auto s = take<std::int16_t>(buf, doff, "samples");
        w.samples[i] = static_cast<double>(s) / 32767.0;
      }
      return w;
    }
    off = o2 + size + (size & 1);
  }
  throw DataError("wav file has no data chunk: " + path);
}

void write_path_tsv(const std::string& path,
                    const std::vector<std::pair<int, int>>& pairs) {
  std::ostringstream os;
  for (const auto& [a, b] : pairs) os << a << '\t' << b << '\n';
  write_all(path, os.str());
}

std::vector<std::pair<int, int>> read_path_tsv(const std::string& path) {
  std::istringstream in(read_all(path));
  std::vector<std::pair<int, int>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    int a, b;
    if (!(ls >> a >> b)) throw DataError("malformed path file: " + path);
    out.emplace_back(a, b);
  }
  return out;
}

void write_matrix_tsv(const std::string& path, const Tensor& m) {
  if (m.rank() != 2) throw DataError("write_matrix_tsv: rank-2 required");
  std::ostringstream os;
  os.precision(17);
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) {
      if (j) os << '\t';
      os << m.at(i, j);
    }
    os << '\n';
  }
  write_all(path, os.str());
}

Tensor read_matrix_tsv(const std::string& path) {
  std::istringstream in(read_all(path));
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<double> row;
    double v;
    while (ls >> v) row.push_back(v);
    if (!rows.empty() && rows.front().size() != row.size())
      throw DataError("ragged matrix file: " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("empty matrix file: " + path);
  Tensor t({static_cast<int>(rows.size()), static_cast<int>(rows[0].size())});
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      t.at(static_cast<int>(i), static_cast<int>(j)) = rows[i][j];
  return t;
}

void write_pgm(const std::string& path, const Tensor& m) {
  if (m.rank() != 2) throw DataError("write_pgm: rank-2 required");
  double lo = m.at(0), hi = m.at(0);
  for (std::int64_t i = 0; i < m.size(); ++i) {
    lo = std::min(lo, m.at(i));
    hi = std::max(hi, m.at(i));
  }
  double span = hi - lo > 1e-300 ? hi - lo : 1.0;
  std::string buf =
      "P5\n" + std::to_string(m.cols()) + " " + std::to_string(m.rows()) + "\n255\n";
  for (std::int64_t i = 0; i < m.size(); ++i) {
    int v = static_cast<int>(std::lround((m.at(i) - lo) / span * 255.0));
    buf.push_back(static_cast<char>(std::clamp(v, 0, 255)));
  }
  write_all(path, buf);
}

std::string encode_kv(const KvMap& kv) {
  std::ostringstream os;
  for (const auto& [k, v] : kv) os << k << '=' << v << '\n';
  return os.str();
}

KvMap decode_kv(const std::string& text) {
  KvMap kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("malformed key=value line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

KvMap model_config_to_kv(const model::ModelConfig& cfg) {
  KvMap kv;
  kv["d_mel"] = std::to_string(cfg.d_mel);
  kv["d_aux"] = std::to_string(cfg.d_aux);
  kv["encoder_layers"] = std::to_string(cfg.encoder_layers);
  kv["encoder_units"] = std::to_string(cfg.encoder_units);
  kv["per_layer_factor"] = std::to_string(cfg.per_layer_factor);
  kv["prenet_units"] = std::to_string(cfg.prenet_units);
  kv["attn_units"] = std::to_string(cfg.attn_units);
  kv["attn_filters"] = std::to_string(cfg.attn_filters);
  kv["attn_kernel"] = std::to_string(cfg.attn_kernel);
  kv["attn_v_dim"] = std::to_string(cfg.attn_v_dim);
  kv["decoder_units"] = std::to_string(cfg.decoder_units);
  kv["frames_per_step"] = std::to_string(cfg.frames_per_step);
  kv["mixtures"] = std::to_string(cfg.mixtures);
  kv["output_mode"] = cfg.output_mode == model::OutputMode::kGmmMl ? "gmm" : "mse";
  kv["attention_mode"] =
      cfg.attention_mode == model::AttentionMode::kDiagonal ? "diagonal" : "learned";
  kv["use_location_code"] = cfg.use_location_code ? "1" : "0";
  kv["use_mel_input"] = cfg.use_mel_input ? "1" : "0";
  kv["use_aux_input"] = cfg.use_aux_input ? "1" : "0";
  kv["zoneout_p"] = fmt_double(cfg.zoneout_p);
  kv["prenet_dropout"] = fmt_double(cfg.prenet_dropout);
  kv["postnet_dropout"] = fmt_double(cfg.postnet_dropout);
  kv["postnet_bank_kernels"] = std::to_string(cfg.postnet_bank_kernels);
  kv["postnet_bank_channels"] = std::to_string(cfg.postnet_bank_channels);
  kv["postnet_channels"] = std::to_string(cfg.postnet_channels);
  kv["stop_threshold"] = fmt_double(cfg.stop_threshold);
  return kv;
}

model::ModelConfig model_config_from_kv(const KvMap& kv) {
  model::ModelConfig cfg;
  cfg.d_mel = kv_int(kv, "d_mel");
  cfg.d_aux = kv_int(kv, "d_aux");
  cfg.encoder_layers = kv_int(kv, "encoder_layers");
  cfg.encoder_units = kv_int(kv, "encoder_units");
  cfg.per_layer_factor = kv_int(kv, "per_layer_factor");
  cfg.prenet_units = kv_int(kv, "prenet_units");
  cfg.attn_units = kv_int(kv, "attn_units");
  cfg.attn_filters = kv_int(kv, "attn_filters");
  cfg.attn_kernel = kv_int(kv, "attn_kernel");
  cfg.attn_v_dim = kv_int(kv, "attn_v_dim");
  cfg.decoder_units = kv_int(kv, "decoder_units");
  cfg.frames_per_step = kv_int(kv, "frames_per_step");
  cfg.mixtures = kv_int(kv, "mixtures");
  cfg.output_mode = kv.at("output_mode") == "gmm" ? model::OutputMode::kGmmMl
                                                  : model::OutputMode::kMse;
  cfg.attention_mode = kv.at("attention_mode") == "diagonal"
                           ? model::AttentionMode::kDiagonal
                           : model::AttentionMode::kLearned;
  cfg.use_location_code = kv.at("use_location_code") == "1";
  cfg.use_mel_input = kv.at("use_mel_input") == "1";
  cfg.use_aux_input = kv.at("use_aux_input") == "1";
  cfg.zoneout_p = kv_double(kv, "zoneout_p");
  cfg.prenet_dropout = kv_double(kv, "prenet_dropout");
  cfg.postnet_dropout = kv_double(kv, "postnet_dropout");
  cfg.postnet_bank_kernels = kv_int(kv, "postnet_bank_kernels");
  cfg.postnet_bank_channels = kv_int(kv, "postnet_bank_channels");
  cfg.postnet_channels = kv_int(kv, "postnet_channels");
  cfg.stop_threshold = kv_double(kv, "stop_threshold");
  return cfg;
}

KvMap train_config_to_kv(const train::TrainConfig& cfg) {
  KvMap kv;
  kv["learning_rate"] = fmt_double(cfg.learning_rate);
  kv["lr_decay"] = fmt_double(cfg.lr_decay);
  kv["lr_decay_after_epoch"] = std::to_string(cfg.lr_decay_after_epoch);
  kv["l2"] = fmt_double(cfg.l2);
  kv["batch_size"] = std::to_string(cfg.batch_size);
  kv["seed"] = std::to_string(cfg.seed);
  kv["epochs"] = std::to_string(cfg.epochs);
  kv["grad_clip_norm"] = fmt_double(cfg.grad_clip_norm);
  kv["adam_beta1"] = fmt_double(cfg.adam_beta1);
  kv["adam_beta2"] = fmt_double(cfg.adam_beta2);
  kv["adam_eps"] = fmt_double(cfg.adam_eps);
  return kv;
}

train::TrainConfig train_config_from_kv(const KvMap& kv) {
  train::TrainConfig cfg;
  cfg.learning_rate = kv_double(kv, "learning_rate");
  cfg.lr_decay = kv_double(kv, "lr_decay");
  cfg.lr_decay_after_epoch = kv_int(kv, "lr_decay_after_epoch");
  cfg.l2 = kv_double(kv, "l2");
  cfg.batch_size = kv_int(kv, "batch_size");
  cfg.seed = kv_u64(kv, "seed");
  cfg.epochs = kv_int(kv, "epochs");
  cfg.grad_clip_norm = kv_double(kv, "grad_clip_norm");
  cfg.adam_beta1 = kv_double(kv, "adam_beta1");
  cfg.adam_beta2 = kv_double(kv, "adam_beta2");
  cfg.adam_eps = kv_double(kv, "adam_eps");
  return cfg;
}

KvMap loss_weights_to_kv(const train::LossWeights& w) {
  KvMap kv;
  kv["w_dec"] = fmt_double(w.w_dec);
  kv["w_post"] = fmt_double(w.w_post);
  kv["w_end"] = fmt_double(w.w_end);
  return kv;
}

train::LossWeights loss_weights_from_kv(const KvMap& kv) {
  train::LossWeights w;
  w.w_dec = kv_double(kv, "w_dec");
  w.w_post = kv_double(kv, "w_post");
  w.w_end = kv_double(kv, "w_end");
  return w;
}

KvMap mel_config_to_kv(const dsp::MelConfig& cfg) {
  KvMap kv;
  kv["sample_rate"] = std::to_string(cfg.sample_rate);
  kv["fft_size"] = std::to_string(cfg.fft_size);
  kv["win_ms"] = fmt_double(cfg.win_ms);
  kv["hop_ms"] = fmt_double(cfg.hop_ms);
  kv["n_mels"] = std::to_string(cfg.n_mels);
  kv["fmin_hz"] = fmt_double(cfg.fmin_hz);
  kv["fmax_hz"] = fmt_double(cfg.fmax_hz);
  kv["log_floor"] = fmt_double(cfg.log_floor);
  return kv;
}

dsp::MelConfig mel_config_from_kv(const KvMap& kv) {
  dsp::MelConfig cfg;
  cfg.sample_rate = kv_int(kv, "sample_rate");
  cfg.fft_size = kv_int(kv, "fft_size");
  cfg.win_ms = kv_double(kv, "win_ms");
  cfg.hop_ms = kv_double(kv, "hop_ms");
  cfg.n_mels = kv_int(kv, "n_mels");
  cfg.fmin_hz = kv_double(kv, "fmin_hz");
  cfg.fmax_hz = kv_double(kv, "fmax_hz");
  cfg.log_floor = kv_double(kv, "log_floor");
  return cfg;
}

std::string encode_double_list(const std::vector<double>& v) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << ',';
    os << v[i];
  }
  return os.str();
}

std::vector<double> decode_double_list(const std::string& s) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto comma = s.find(',', start);
    std::string tok = s.substr(start, comma == std::string::npos ? std::string::npos
                                                                 : comma - start);
    if (!tok.empty()) out.push_back(std::stod(tok));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t seed) {
  static std::uint32_t table[256];
  static bool init = false;
  if (!init) {
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      table[i] = c;
    }
    init = true;
  }
  std::uint32_t c = seed ^ 0xffffffffu;
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) c = table[(c ^ p[i]) & 0xffu] ^ (c >> 8);
  return c ^ 0xffffffffu;
}

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const ParamStore& params, const train::AdamState& opt) {
  KvMap header;
  for (const auto& [k, v] : model_config_to_kv(meta.model_cfg)) header["model." + k] = v;
  for (const auto& [k, v] : train_config_to_kv(meta.train_cfg)) header["train." + k] = v;
  for (const auto& [k, v] : loss_weights_to_kv(meta.weights)) header["loss." + k] = v;
  header["epoch"] = std::to_string(meta.epoch);
  header["global_step"] = std::to_string(meta.global_step);
  header["adam_t"] = std::to_string(opt.t);
  for (const auto& [k, v] : meta.extra) header["x." + k] = v;

  std::string body;
  std::string header_text = encode_kv(header);
  put<std::uint32_t>(body, meta.version);
  put<std::uint32_t>(body, static_cast<std::uint32_t>(header_text.size()));
  body.append(header_text);

  std::uint32_t n_tensors = static_cast<std::uint32_t>(params.size());
  n_tensors += static_cast<std::uint32_t>(opt.m.size() + opt.v.size());
  put<std::uint32_t>(body, n_tensors);
  for (const auto& [name, entry] : params) append_tensor(body, name, entry.value);
  for (const auto& [name, t] : opt.m) append_tensor(body, "adam.m." + name, t);
  for (const auto& [name, t] : opt.v) append_tensor(body, "adam.v." + name, t);

  std::string buf;
  buf.append(kCheckpointMagic, 8);
  buf.append(body);
  put<std::uint32_t>(buf, crc32(body.data(), body.size()));
  write_all(path, buf);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::string buf = read_all(path);
  if (buf.size() < 16 || std::memcmp(buf.data(), kCheckpointMagic, 8) != 0)
    throw DataError("not a checkpoint file: " + path);
  std::string body = buf.substr(8, buf.size() - 12);
  std::uint32_t stored;
  std::memcpy(&stored, buf.data() + buf.size() - 4, 4);
  if (stored != crc32(body.data(), body.size()))
    throw DataError("checkpoint checksum mismatch: " + path);

  std::size_t off = 0;
  LoadedCheckpoint out;
  out.meta.version = take<std::uint32_t>(body, off, "version");
  if (out.meta.version != 1) throw DataError("unsupported checkpoint version");
  auto header_len = take<std::uint32_t>(body, off, "header length");
  if (off + header_len > body.size()) throw DataError("truncated checkpoint header");
  KvMap header = decode_kv(body.substr(off, header_len));
  off += header_len;

  KvMap model_kv, train_kv, loss_kv;
  for (const auto& [k, v] : header) {
    if (k.rfind("model.", 0) == 0) model_kv[k.substr(6)] = v;
    else if (k.rfind("train.", 0) == 0) train_kv[k.substr(6)] = v;
    else if (k.rfind("loss.", 0) == 0) loss_kv[k.substr(5)] = v;
    else if (k.rfind("x.", 0) == 0) out.meta.extra[k.substr(2)] = v;
  }
  out.meta.model_cfg = model_config_from_kv(model_kv);
  out.meta.train_cfg = train_config_from_kv(train_kv);
  out.meta.weights = loss_weights_from_kv(loss_kv);
  out.meta.epoch = kv_int(header, "epoch");
  out.meta.global_step = static_cast<std::int64_t>(kv_u64(header, "global_step"));
  out.opt.t = static_cast<std::int64_t>(kv_u64(header, "adam_t"));

  auto n_tensors = take<std::uint32_t>(body, off, "tensor count");
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    auto [name, t] = take_tensor(body, off);
    if (name.rfind("adam.m.", 0) == 0) out.opt.m.emplace(name.substr(7), std::move(t));
    else if (name.rfind("adam.v.", 0) == 0) out.opt.v.emplace(name.substr(7), std::move(t));
    else out.params.create(name, std::move(t));
  }
  if (off != body.size()) throw DataError("trailing bytes in checkpoint");
  return out;
}

void quantize_to_f32(ParamStore& params) {
  for (auto& [name, entry] : params)
    for (std::int64_t i = 0; i < entry.value.size(); ++i)
      entry.value.at(i) = static_cast<double>(static_cast<float>(entry.value.at(i)));
}

void quantize_to_f32(train::AdamState& opt) {
  for (auto& [name, t] : opt.m)
    for (std::int64_t i = 0; i < t.size(); ++i)
      t.at(i) = static_cast<double>(static_cast<float>(t.at(i)));
  for (auto& [name, t] : opt.v)
    for (std::int64_t i = 0; i < t.size(); ++i)
      t.at(i) = static_cast<double>(static_cast<float>(t.at(i)));
}

namespace {
constexpr char kManifestHeader[] = "#seqvc-manifest\tv1";

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    if (tab == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return out;
}
}  // namespace

void save_manifest(const std::string& path, const Manifest& m) {
  std::ostringstream os;
  os << kManifestHeader << '\n';
  for (const auto& [k, v] : m.header) os << "#cfg\t" << k << '\t' << v << '\n';
  os << "#columns\tid\tsplit\tseed\tsrc_frames\ttgt_frames\tsrc_dur_s\ttgt_dur_s"
     << "\twarp_ratio\tsrc_mel\tsrc_aux\tsrc_f0\tsrc_wav\ttgt_mel\ttgt_aux\ttgt_f0"
     << "\ttgt_wav\tgt_path\n";
  os.precision(17);
  for (const auto& e : m.items) {
    os << e.id << '\t' << e.split << '\t' << e.seed << '\t' << e.src_frames << '\t'
       << e.tgt_frames << '\t' << e.src_dur_s << '\t' << e.tgt_dur_s << '\t'
       << e.warp_ratio << '\t' << e.src_mel << '\t' << e.src_aux << '\t' << e.src_f0
       << '\t' << e.src_wav << '\t' << e.tgt_mel << '\t' << e.tgt_aux << '\t'
       << e.tgt_f0 << '\t' << e.tgt_wav << '\t' << e.gt_path << '\n';
  }
  write_all(path, os.str());
}

Manifest load_manifest(const std::string& path) {
  std::istringstream in(read_all(path));
  std::string line;
  if (!std::getline(in, line) || line != kManifestHeader)
    throw DataError("not a seqvc manifest: " + path);
  Manifest m;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      auto cols = split_tabs(line);
      if (cols[0] == "#cfg" && cols.size() == 3) m.header[cols[1]] = cols[2];
      continue;
    }
    auto c = split_tabs(line);
    if (c.size() != 17) throw DataError("malformed manifest row: " + line);
    ManifestEntry e;
    e.id = c[0];
    e.split = c[1];
    e.seed = std::stoull(c[2]);
    e.src_frames = std::stoi(c[3]);
    e.tgt_frames = std::stoi(c[4]);
    e.src_dur_s = std::stod(c[5]);
    e.tgt_dur_s = std::stod(c[6]);
    e.warp_ratio = std::stod(c[7]);
    e.src_mel = c[8];
    e.src_aux = c[9];
    e.src_f0 = c[10];
    e.src_wav = c[11];
    e.tgt_mel = c[12];
    e.tgt_aux = c[13];
    e.tgt_f0 = c[14];
    e.tgt_wav = c[15];
    e.gt_path = c[16];
    m.items.push_back(std::move(e));
  }
  return m;
}

std::string format_train_log_line(std::int64_t step, int epoch, double lr,
                                  double total, double dec, double post, double end) {
  std::ostringstream os;
  os.precision(10);
  os << step << '\t' << epoch << '\t' << lr << '\t' << total << '\t' << dec << '\t'
     << post << '\t' << end;
  return os.str();
}

}  // namespace seqvc::io
