#include "pagmil/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "pagmil/errors.hpp"

namespace pagmil {

namespace {

constexpr char kMagic[8] = {'P', 'G', 'M', 'L', 'C', 'K', 'P', '1'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw ConfigError("checkpoint: truncated file");
    return v;
}

void put_vec(std::ostream& os, const Vec& v) {
    put<uint64_t>(os, v.size());
    os.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * sizeof(double)));
}

Vec get_vec(std::istream& is) {
    auto n = get<uint64_t>(is);
    if (n > (1ull << 32)) throw ConfigError("checkpoint: implausible tensor size");
    Vec v(n);
    is.read(reinterpret_cast<char*>(v.data()), std::streamsize(n * sizeof(double)));
    if (!is) throw ConfigError("checkpoint: truncated tensor");
    return v;
}

void put_mat(std::ostream& os, const Mat& m) {
    put<int32_t>(os, m.rows);
    put<int32_t>(os, m.cols);
    os.write(reinterpret_cast<const char*>(m.a.data()), std::streamsize(m.a.size() * sizeof(double)));
}

Mat get_mat(std::istream& is) {
    auto rows = get<int32_t>(is);
    auto cols = get<int32_t>(is);
    if (rows < 0 || cols < 0 || int64_t(rows) * cols > (1ll << 32))
        throw ConfigError("checkpoint: implausible matrix shape");
    Mat m(rows, cols);
    is.read(reinterpret_cast<char*>(m.a.data()), std::streamsize(m.a.size() * sizeof(double)));
    if (!is) throw ConfigError("checkpoint: truncated matrix");
    return m;
}

} // namespace

void save_checkpoint(const ModelState& model, std::ostream& os) {
    os.write(kMagic, sizeof(kMagic));
    put<uint32_t>(os, kVersion);
    put<int32_t>(os, model.dims.feature_dim);
    put<int32_t>(os, model.dims.attn_hidden);
    put<int32_t>(os, model.dims.thumb_side);
    put<int32_t>(os, model.dims.prompt_hidden);
    put<int32_t>(os, model.dims.p_dim);

    put_mat(os, model.attn.V);
    put_mat(os, model.attn.U);
    put_vec(os, model.attn.w);
    put_mat(os, model.inst.W);
    put_vec(os, model.inst.b);
    put_mat(os, model.pgen.W1);
    put_vec(os, model.pgen.b1);
    put_mat(os, model.pgen.W2);
    put_vec(os, model.pgen.b2);

    put<uint32_t>(os, uint32_t(model.heads.size()));
    put<int32_t>(os, model.heads.active_id());
    for (const Head& h : model.heads.all()) {
        put<int32_t>(os, h.task_id);
        put<uint8_t>(os, h.frozen ? 1 : 0);
        put_mat(os, h.W);
        put_vec(os, h.b);
    }

    put<double>(os, model.prompts.min_margin);
    put<uint32_t>(os, uint32_t(model.prompts.entries.size()));
    for (const TaskPromptEntry& e : model.prompts.entries) {
        put<int32_t>(os, e.task_id);
        put<int32_t>(os, e.head_id);
        put_vec(os, e.mean_prompt);
    }
    if (!os) throw std::runtime_error("checkpoint: write failed");
}

ModelState load_checkpoint(std::istream& is) {
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw ConfigError("checkpoint: bad magic, not a checkpoint file");
    auto version = get<uint32_t>(is);
    if (version != kVersion)
        throw ConfigError("checkpoint: unsupported version " + std::to_string(version));

    ModelState m;
    m.dims.feature_dim = get<int32_t>(is);
    m.dims.attn_hidden = get<int32_t>(is);
    m.dims.thumb_side = get<int32_t>(is);
    m.dims.prompt_hidden = get<int32_t>(is);
    m.dims.p_dim = get<int32_t>(is);

    m.attn.V = get_mat(is);
    m.attn.U = get_mat(is);
    m.attn.w = get_vec(is);
    m.inst.W = get_mat(is);
    m.inst.b = get_vec(is);
    m.pgen.W1 = get_mat(is);
    m.pgen.b1 = get_vec(is);
    m.pgen.W2 = get_mat(is);
    m.pgen.b2 = get_vec(is);

    auto head_count = get<uint32_t>(is);
    auto active = get<int32_t>(is);
    std::vector<Head> heads(head_count);
    for (Head& h : heads) {
        h.task_id = get<int32_t>(is);
        h.frozen = get<uint8_t>(is) != 0;
        h.W = get_mat(is);
        h.b = get_vec(is);
    }
    m.heads = HeadRegistry::restore(std::move(heads), active);

    m.prompts.min_margin = get<double>(is);
    auto entry_count = get<uint32_t>(is);
    m.prompts.entries.resize(entry_count);
    for (TaskPromptEntry& e : m.prompts.entries) {
        e.task_id = get<int32_t>(is);
        e.head_id = get<int32_t>(is);
        e.mean_prompt = get_vec(is);
    }
    return m;
}

void write_checkpoint_file(const ModelState& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    save_checkpoint(model, os);
}

ModelState read_checkpoint_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    return load_checkpoint(is);
}

} // namespace pagmil
