#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "advkit/attacks.hpp"
#include "advkit/errors.hpp"
#include "advkit/models.hpp"
#include "advkit/tensor.hpp"

namespace advkit {

// ---------------------------------------------------------------------------
// Byte-level helpers (explicitly little-endian, independent of host order)
// ---------------------------------------------------------------------------

namespace bytes {

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

inline void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

inline void put_f64(std::vector<unsigned char>& out, double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, 8);
    put_u64(out, v);
}

/// Cursor over an in-memory byte buffer; every read checks the remaining
/// length and reports the failing offset.
class Reader {
public:
    Reader(const unsigned char* data, std::size_t len, std::string name)
        : data_(data), len_(len), name_(std::move(name)) {}

    std::size_t offset() const { return off_; }
    std::size_t remaining() const { return len_ - off_; }

    void need(std::size_t n) const {
        if (off_ + n > len_)
            throw DataFormatError("'" + name_ + "' truncated: need " + std::to_string(n) +
                                      " more bytes",
                                  static_cast<long long>(off_));
    }

    std::uint8_t u8() {
        need(1);
        return data_[off_++];
    }

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(data_[off_ + static_cast<std::size_t>(i)]) << (8 * i);
        off_ += 4;
        return v;
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(data_[off_ + static_cast<std::size_t>(i)]) << (8 * i);
        off_ += 8;
        return v;
    }

    double f64() {
        std::uint64_t v = u64();
        double d;
        std::memcpy(&d, &v, 8);
        return d;
    }

    void raw(void* dst, std::size_t n) {
        need(n);
        std::memcpy(dst, data_ + off_, n);
        off_ += n;
    }

    void expect_magic(const char (&magic)[5]) {
        need(4);
        if (std::memcmp(data_ + off_, magic, 4) != 0)
            throw DataFormatError("'" + name_ + "' has bad magic (expected " +
                                      std::string(magic, 4) + ")",
                                  static_cast<long long>(off_));
        off_ += 4;
    }

private:
    const unsigned char* data_;
    std::size_t len_;
    std::size_t off_ = 0;
    std::string name_;
};

inline std::vector<unsigned char> read_all(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataFormatError("cannot open '" + path + "'");
    in.seekg(0, std::ios::end);
    auto len = in.tellg();
    in.seekg(0, std::ios::beg);
    std::vector<unsigned char> buf(static_cast<std::size_t>(len));
    in.read(reinterpret_cast<char*>(buf.data()), len);
    if (!in) throw DataFormatError("read failure on '" + path + "'");
    return buf;
}

inline void write_all(const std::string& path, const std::vector<unsigned char>& buf) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataFormatError("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size()));
    if (!out) throw DataFormatError("write failure on '" + path + "'");
}

} // namespace bytes

// ---------------------------------------------------------------------------
// TensorContainer "RFT1": magic | dtype u8 (f64=1, u8=2) | rank u8 |
// extents rank x u64 LE | raw little-endian payload.
// ---------------------------------------------------------------------------

inline constexpr std::uint8_t kDtypeF64 = 1;
inline constexpr std::uint8_t kDtypeU8 = 2;

inline void append_tensor_f64(std::vector<unsigned char>& out, const Tensor& t) {
    out.insert(out.end(), {'R', 'F', 'T', '1'});
    out.push_back(kDtypeF64);
    out.push_back(static_cast<unsigned char>(t.rank()));
    for (std::size_t e : t.shape) bytes::put_u64(out, e);
    for (double v : t.data) bytes::put_f64(out, v);
}

inline void append_tensor_u8(std::vector<unsigned char>& out, std::span<const std::size_t> shape,
                             std::span<const unsigned char> payload) {
    if (shape_numel(shape) != payload.size())
        throw InternalError("u8 tensor payload does not match shape");
    out.insert(out.end(), {'R', 'F', 'T', '1'});
    out.push_back(kDtypeU8);
    out.push_back(static_cast<unsigned char>(shape.size()));
    for (std::size_t e : shape) bytes::put_u64(out, e);
    out.insert(out.end(), payload.begin(), payload.end());
}

struct RawTensor {
    std::uint8_t dtype;
    std::vector<std::size_t> shape;
    std::vector<double> f64;         // filled when dtype == f64
    std::vector<unsigned char> u8;   // filled when dtype == u8
};

inline RawTensor read_tensor(bytes::Reader& r) {
    r.expect_magic("RFT1");
    RawTensor t;
    t.dtype = r.u8();
    if (t.dtype != kDtypeF64 && t.dtype != kDtypeU8)
        throw DataFormatError("unknown dtype code " + std::to_string(t.dtype),
                              static_cast<long long>(r.offset() - 1));
    std::uint8_t rank = r.u8();
    t.shape.resize(rank);
    for (std::uint8_t i = 0; i < rank; ++i) {
        std::uint64_t e = r.u64();
        if (e == 0) throw DataFormatError("zero extent in tensor shape",
                                          static_cast<long long>(r.offset() - 8));
        t.shape[i] = static_cast<std::size_t>(e);
    }
    std::size_t n = shape_numel(t.shape);
    if (t.dtype == kDtypeF64) {
        t.f64.resize(n);
        for (std::size_t i = 0; i < n; ++i) t.f64[i] = r.f64();
    } else {
        t.u8.resize(n);
        r.raw(t.u8.data(), n);
    }
    return t;
}

inline void save_tensor(const std::string& path, const Tensor& t) {
    std::vector<unsigned char> buf;
    append_tensor_f64(buf, t);
    bytes::write_all(path, buf);
}

inline Tensor load_tensor(const std::string& path) {
    auto buf = bytes::read_all(path);
    bytes::Reader r(buf.data(), buf.size(), path);
    RawTensor raw = read_tensor(r);
    if (raw.dtype != kDtypeF64)
        throw DataFormatError("'" + path + "' holds a u8 tensor where f64 was expected");
    return Tensor::from_data(std::move(raw.shape), std::move(raw.f64));
}

// ---------------------------------------------------------------------------
// Model checkpoints "RFC1": magic | u32 LE header length | JSON header |
// one RFT1 f64 container per parameter tensor.
// ---------------------------------------------------------------------------

inline nlohmann::json model_config_json(const ModelConfig& c) {
    return {{"architecture", architecture_name(c.architecture)},
            {"in_channels", c.in_channels},
            {"in_height", c.in_height},
            {"in_width", c.in_width},
            {"num_classes", c.num_classes},
            {"width_factor", c.width_factor},
            {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.architecture = architecture_from_name(j.at("architecture").get<std::string>());
    c.in_channels = j.at("in_channels").get<std::size_t>();
    c.in_height = j.at("in_height").get<std::size_t>();
    c.in_width = j.at("in_width").get<std::size_t>();
    c.num_classes = j.at("num_classes").get<std::size_t>();
    c.width_factor = j.at("width_factor").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

inline void save_checkpoint(const Model& model, const std::string& path,
                            const std::string& config_hash = "") {
    nlohmann::json header = {{"format", "RFC1"},
                             {"model", model_config_json(model.config)},
                             {"param_tensors", model.net.params.size()},
                             {"fingerprint", model_fingerprint(model)}};
    if (!config_hash.empty()) header["config_hash"] = config_hash;
    std::string hs = header.dump();

    std::vector<unsigned char> buf;
    buf.insert(buf.end(), {'R', 'F', 'C', '1'});
    bytes::put_u32(buf, static_cast<std::uint32_t>(hs.size()));
    buf.insert(buf.end(), hs.begin(), hs.end());
    for (const Tensor& p : model.net.params) append_tensor_f64(buf, p);
    bytes::write_all(path, buf);
}

/// Rebuilds the layer tree from the stored config, then overwrites the
/// parameters with the stored values. When expected_config_hash is given
/// it must match the stored one.
inline Model load_checkpoint(const std::string& path,
                             const std::string& expected_config_hash = "") {
    auto buf = bytes::read_all(path);
    bytes::Reader r(buf.data(), buf.size(), path);
    r.expect_magic("RFC1");
    std::uint32_t hlen = r.u32();
    r.need(hlen);
    std::string hs(reinterpret_cast<const char*>(buf.data()) + r.offset(), hlen);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hs);
    } catch (const nlohmann::json::exception& e) {
        throw DataFormatError("'" + path + "' has unparseable header: " + e.what(),
                              static_cast<long long>(r.offset()));
    }
    bytes::Reader body(buf.data() + r.offset() + hlen, buf.size() - r.offset() - hlen, path);

    if (header.value("format", "") != "RFC1")
        throw DataFormatError("'" + path + "' declares unknown format version");
    if (!expected_config_hash.empty()) {
        std::string stored = header.value("config_hash", "");
        if (stored != expected_config_hash)
            throw ConfigError("checkpoint '" + path + "' was produced under config hash '" +
                              stored + "', expected '" + expected_config_hash + "'");
    }

    Model model = build_model(model_config_from_json(header.at("model")));
    std::size_t count = header.at("param_tensors").get<std::size_t>();
    if (count != model.net.params.size())
        throw DataFormatError("'" + path + "' parameter tensor count mismatch");
    for (Tensor& p : model.net.params) {
        RawTensor raw = read_tensor(body);
        if (raw.dtype != kDtypeF64 || raw.shape != p.shape)
            throw DataFormatError("'" + path + "' parameter shape mismatch");
        p.data = std::move(raw.f64);
    }
    std::string fp = header.value("fingerprint", "");
    if (!fp.empty() && fp != model_fingerprint(model))
        throw DataFormatError("'" + path + "' fingerprint mismatch: parameters corrupted");
    return model;
}

// ---------------------------------------------------------------------------
// Adversarial sets "RFA1": magic | u32 LE header length | JSON header |
// RFT1 x | RFT1 x_star | RFT1 adv_output | RFT1 labels (u8).
// Crafting times are chronometric and live next to the artifact in
// timing.json, not inside it, so the container bytes are reproducible.
// ---------------------------------------------------------------------------

inline nlohmann::json attack_config_json(const AttackConfig& a) {
    return {{"epsilon", a.epsilon},       {"step_size", a.step_size},
            {"steps", a.steps},           {"random_start", a.random_start},
            {"targeted", a.targeted},     {"target_class", a.target_class},
            {"seed", a.seed}};
}

inline AttackConfig attack_config_from_json(const nlohmann::json& j) {
    AttackConfig a;
    a.epsilon = j.at("epsilon").get<double>();
    a.step_size = j.at("step_size").get<double>();
    a.steps = j.at("steps").get<int>();
    a.random_start = j.at("random_start").get<bool>();
    a.targeted = j.at("targeted").get<bool>();
    a.target_class = j.at("target_class").get<int>();
    a.seed = j.at("seed").get<std::uint64_t>();
    return a;
}

inline void save_adversarial_set(const AdversarialSet& set, const std::string& path,
                                 const std::string& config_hash = "") {
    nlohmann::json header = {{"format", "RFA1"},
                             {"attack", attack_config_json(set.config)},
                             {"model_id", set.model_id},
                             {"records", set.size()},
                             {"max_linf", set.max_linf()}};
    if (!config_hash.empty()) header["config_hash"] = config_hash;
    std::string hs = header.dump();

    std::vector<unsigned char> buf;
    buf.insert(buf.end(), {'R', 'F', 'A', '1'});
    bytes::put_u32(buf, static_cast<std::uint32_t>(hs.size()));
    buf.insert(buf.end(), hs.begin(), hs.end());
    append_tensor_f64(buf, set.x);
    append_tensor_f64(buf, set.x_star);
    append_tensor_f64(buf, set.adv_output);
    std::vector<unsigned char> labels(set.y_true.size());
    for (std::size_t i = 0; i < labels.size(); ++i)
        labels[i] = static_cast<unsigned char>(set.y_true[i]);
    std::size_t shape[1] = {labels.size()};
    append_tensor_u8(buf, shape, labels);
    bytes::write_all(path, buf);
}

inline AdversarialSet load_adversarial_set(const std::string& path,
                                           const std::string& expected_config_hash = "") {
    auto buf = bytes::read_all(path);
    bytes::Reader r(buf.data(), buf.size(), path);
    r.expect_magic("RFA1");
    std::uint32_t hlen = r.u32();
    r.need(hlen);
    std::string hs(reinterpret_cast<const char*>(buf.data()) + r.offset(), hlen);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hs);
    } catch (const nlohmann::json::exception& e) {
        throw DataFormatError("'" + path + "' has unparseable header: " + e.what(),
                              static_cast<long long>(r.offset()));
    }
    if (header.value("format", "") != "RFA1")
        throw DataFormatError("'" + path + "' declares unknown format version");
    if (!expected_config_hash.empty()) {
        std::string stored = header.value("config_hash", "");
        if (stored != expected_config_hash)
            throw ConfigError("adversarial set '" + path + "' was produced under config hash '" +
                              stored + "', expected '" + expected_config_hash + "'");
    }
    bytes::Reader body(buf.data() + r.offset() + hlen, buf.size() - r.offset() - hlen, path);

    AdversarialSet set;
    set.config = attack_config_from_json(header.at("attack"));
    set.model_id = header.value("model_id", "");
    RawTensor x = read_tensor(body), xs = read_tensor(body), out = read_tensor(body),
              labels = read_tensor(body);
    if (x.dtype != kDtypeF64 || xs.dtype != kDtypeF64 || out.dtype != kDtypeF64 ||
        labels.dtype != kDtypeU8)
        throw DataFormatError("'" + path + "' tensor dtype layout is wrong");
    set.x = Tensor::from_data(std::move(x.shape), std::move(x.f64));
    set.x_star = Tensor::from_data(std::move(xs.shape), std::move(xs.f64));
    set.adv_output = Tensor::from_data(std::move(out.shape), std::move(out.f64));
    set.y_true.resize(labels.u8.size());
    for (std::size_t i = 0; i < labels.u8.size(); ++i) set.y_true[i] = labels.u8[i];
    set.crafting_seconds.assign(set.y_true.size(), 0.0);
    std::size_t declared = header.value("records", std::size_t{0});
    if (declared != set.size() || set.x.shape != set.x_star.shape ||
        set.adv_output.shape[0] != set.size())
        throw DataFormatError("'" + path + "' record counts are inconsistent");
    return set;
}

} // namespace advkit
