#include "sonnet/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace sonnet {

namespace {

constexpr char kMagic[8] = {'S', 'O', 'N', 'N', 'E', 'T', 'C', 'K'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <class T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

void put_string32(std::string& out, const std::string& s) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out += s;
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    template <class T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string get_bytes(std::uint64_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, static_cast<std::size_t>(n));
        pos_ += static_cast<std::size_t>(n);
        return s;
    }
    bool at_end() const { return pos_ == bytes_.size(); }

private:
    void need(std::uint64_t n) const {
        if (n > bytes_.size() - pos_) throw CheckpointError("checkpoint truncated");
    }
    const std::string& bytes_;
    std::size_t pos_ = 0;
};

std::string render_header(const std::map<std::string, std::string>& header) {
    std::string text;
    for (const auto& [k, v] : header) {
        if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos)
            throw CheckpointError("header entry '" + k + "' contains a reserved character");
        text += k + "=" + v + "\n";
    }
    return text;
}

std::map<std::string, std::string> parse_header(const std::string& text) {
    std::map<std::string, std::string> header;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw CheckpointError("malformed header line: " + line);
        header[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return header;
}

}  // namespace

Checkpoint Checkpoint::from_parameters(const ParameterSet& params) {
    Checkpoint c;
    for (const auto& [name, p] : params) {
        NamedTensor t;
        t.name = name;
        t.rows = static_cast<std::uint64_t>(p.value.rows());
        t.cols = static_cast<std::uint64_t>(p.value.cols());
        t.values.reserve(static_cast<std::size_t>(t.rows * t.cols));
        for (Eigen::Index i = 0; i < p.value.rows(); ++i)
            for (Eigen::Index j = 0; j < p.value.cols(); ++j) t.values.push_back(static_cast<double>(p.value(i, j)));
        c.tensors.push_back(std::move(t));
    }
    return c;
}

void Checkpoint::load_into(ParameterSet& params) const {
    for (const auto& t : tensors) {
        if (!params.contains(t.name)) throw CheckpointError("checkpoint tensor '" + t.name + "' unknown to the model");
        auto& p = params.at(t.name);
        if (static_cast<std::uint64_t>(p.value.rows()) != t.rows || static_cast<std::uint64_t>(p.value.cols()) != t.cols)
            throw CheckpointError("checkpoint tensor '" + t.name + "' has shape " + std::to_string(t.rows) + "x" +
                                  std::to_string(t.cols) + ", model expects " + std::to_string(p.value.rows()) + "x" +
                                  std::to_string(p.value.cols()));
        std::size_t k = 0;
        for (Eigen::Index i = 0; i < p.value.rows(); ++i)
            for (Eigen::Index j = 0; j < p.value.cols(); ++j) p.value(i, j) = static_cast<Real>(t.values[k++]);
    }
    for (const auto& [name, _] : params) {
        bool found = false;
        for (const auto& t : tensors) found = found || t.name == name;
        if (!found) throw CheckpointError("checkpoint lacks tensor '" + name + "'");
    }
}

void Checkpoint::populate(ParameterSet& params) const {
    for (const auto& t : tensors) {
        Matrix m(static_cast<Eigen::Index>(t.rows), static_cast<Eigen::Index>(t.cols));
        std::size_t k = 0;
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = static_cast<Real>(t.values[k++]);
        params.set(t.name, std::move(m));
    }
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    std::string out(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kCheckpointVersion);
    const std::string header = render_header(ckpt.header);
    put<std::uint64_t>(out, header.size());
    out += header;
    put<std::uint64_t>(out, ckpt.vocab.size());
    for (const auto& w : ckpt.vocab) put_string32(out, w);
    put<std::uint64_t>(out, ckpt.tensors.size());
    for (const auto& t : ckpt.tensors) {
        if (t.values.size() != t.rows * t.cols) throw CheckpointError("tensor '" + t.name + "' value count mismatch");
        put_string32(out, t.name);
        put<std::uint32_t>(out, 2);
        put<std::uint64_t>(out, t.rows);
        put<std::uint64_t>(out, t.cols);
        for (double v : t.values) put<double>(out, v);
    }
    return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
    Reader r(bytes);
    if (r.get_bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) throw CheckpointError("not a checkpoint file");
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion)
        throw CheckpointError("checkpoint version " + std::to_string(version) + " not supported (expected " +
                              std::to_string(kCheckpointVersion) + ")");
    Checkpoint c;
    c.header = parse_header(r.get_bytes(r.get<std::uint64_t>()));
    const auto nv = r.get<std::uint64_t>();
    for (std::uint64_t i = 0; i < nv; ++i) c.vocab.push_back(r.get_bytes(r.get<std::uint32_t>()));
    const auto nt = r.get<std::uint64_t>();
    for (std::uint64_t i = 0; i < nt; ++i) {
        NamedTensor t;
        t.name = r.get_bytes(r.get<std::uint32_t>());
        const auto rank = r.get<std::uint32_t>();
        if (rank != 2) throw CheckpointError("tensor '" + t.name + "' has unsupported rank " + std::to_string(rank));
        t.rows = r.get<std::uint64_t>();
        t.cols = r.get<std::uint64_t>();
        if (t.rows != 0 && t.cols > (bytes.size() / sizeof(double)) / t.rows)
            throw CheckpointError("tensor '" + t.name + "' larger than file");
        t.values.resize(static_cast<std::size_t>(t.rows * t.cols));
        for (auto& v : t.values) v = r.get<double>();
        c.tensors.push_back(std::move(t));
    }
    if (!r.at_end()) throw CheckpointError("trailing bytes after checkpoint");
    return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    const std::string bytes = serialize_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize_checkpoint(ss.str());
}

std::string dump_checkpoint_text(const Checkpoint& ckpt, bool with_values) {
    std::ostringstream os;
    os << "version " << kCheckpointVersion << "\n[header]\n";
    for (const auto& [k, v] : ckpt.header) os << k << "=" << v << "\n";
    os << "[vocab] " << ckpt.vocab.size() << "\n";
    for (std::size_t i = 0; i < ckpt.vocab.size(); ++i) os << i << " " << ckpt.vocab[i] << "\n";
    os << "[tensors] " << ckpt.tensors.size() << "\n";
    char buf[32];
    for (const auto& t : ckpt.tensors) {
        os << t.name << " " << t.rows << "x" << t.cols << "\n";
        if (!with_values) continue;
        for (std::uint64_t i = 0; i < t.rows; ++i) {
            for (std::uint64_t j = 0; j < t.cols; ++j) {
                std::snprintf(buf, sizeof(buf), "%.17g", t.values[static_cast<std::size_t>(i * t.cols + j)]);
                os << (j ? " " : "") << buf;
            }
            os << "\n";
        }
    }
    return os.str();
}

}  // namespace sonnet
