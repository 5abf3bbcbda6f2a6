#include "sreg/io.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <sstream>

namespace sreg {

namespace fs = std::filesystem;

namespace {

constexpr const char* kVolumeMagic = "SREG1";
constexpr const char* kCheckpointMagic = "SREGCKPT1";
constexpr const char* kManifestMagic = "SREGMANIFEST1";

void append_u64le(std::string& out, uint64_t bits) {
    for (int i = 0; i < 8; ++i)
        out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

void append_f64le(std::string& out, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    append_u64le(out, bits);
}

void append_u16le(std::string& out, uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

double read_f64le(const char* p) {
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
        bits |= static_cast<uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}

uint16_t read_u16le(const char* p) {
    return static_cast<uint16_t>(static_cast<unsigned char>(p[0]) |
                                 (static_cast<unsigned char>(p[1]) << 8));
}

void atomic_write(const fs::path& path, const std::string& bytes) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw IoError("cannot open for writing: " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out)
            throw IoError("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string read_all(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct VolumeHeader {
    std::string kind;
    std::vector<int64_t> dims;
    int64_t components = 1;
    std::string encoding;
    size_t payload_offset = 0;
};

std::string volume_header_text(const std::string& kind, const GridShape& shape,
                               int64_t components, const std::string& encoding) {
    std::ostringstream os;
    os << kVolumeMagic << "\n";
    os << "kind " << kind << "\n";
    os << "dims";
    for (int64_t d : shape.dims())
        os << " " << d;
    os << "\n";
    os << "components " << components << "\n";
    os << "encoding " << encoding << "\n";
    os << "data\n";
    return os.str();
}

VolumeHeader parse_volume_header(const std::string& bytes, const fs::path& path) {
    VolumeHeader h;
    size_t pos = 0;
    auto next_line = [&]() {
        const size_t nl = bytes.find('\n', pos);
        if (nl == std::string::npos)
            throw IoError("truncated header: " + path.string());
        std::string line = bytes.substr(pos, nl - pos);
        pos = nl + 1;
        return line;
    };
    if (next_line() != kVolumeMagic)
        throw IoError("bad magic (expected SREG1): " + path.string());
    for (;;) {
        const std::string line = next_line();
        if (line == "data")
            break;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "kind")
            ls >> h.kind;
        else if (key == "dims") {
            int64_t d;
            while (ls >> d)
                h.dims.push_back(d);
        } else if (key == "components")
            ls >> h.components;
        else if (key == "encoding")
            ls >> h.encoding;
        else
            throw IoError("unknown header key '" + key + "': " + path.string());
    }
    h.payload_offset = pos;
    return h;
}

} // namespace

void write_image(const fs::path& path, const ImageVolume& img) {
    std::string bytes = volume_header_text("image", img.shape, 1, "f64le");
    bytes.reserve(bytes.size() + img.values.size() * 8);
    for (double v : img.values)
        append_f64le(bytes, v);
    atomic_write(path, bytes);
}

void write_field(const fs::path& path, const DisplacementField& field) {
    std::string bytes = volume_header_text("field", field.shape, field.ndim(), "f64le");
    bytes.reserve(bytes.size() + field.components.size() * 8);
    for (double v : field.components)
        append_f64le(bytes, v);
    atomic_write(path, bytes);
}

void write_labels(const fs::path& path, const LabelVolume& labels) {
    std::string bytes = volume_header_text("labels", labels.shape, 1, "u16le");
    bytes.reserve(bytes.size() + labels.labels.size() * 2);
    for (uint16_t v : labels.labels)
        append_u16le(bytes, v);
    atomic_write(path, bytes);
}

ImageVolume read_image(const fs::path& path) {
    const std::string bytes = read_all(path);
    const VolumeHeader h = parse_volume_header(bytes, path);
    if (h.kind != "image" || h.encoding != "f64le" || h.components != 1)
        throw IoError("not an f64 image volume: " + path.string());
    ImageVolume img(GridShape(h.dims));
    const size_t need = img.values.size() * 8;
    if (bytes.size() - h.payload_offset != need)
        throw IoError("payload size mismatch: " + path.string());
    for (size_t i = 0; i < img.values.size(); ++i)
        img.values[i] = read_f64le(bytes.data() + h.payload_offset + 8 * i);
    return img;
}

DisplacementField read_field(const fs::path& path) {
    const std::string bytes = read_all(path);
    const VolumeHeader h = parse_volume_header(bytes, path);
    const GridShape shape(h.dims);
    if (h.kind != "field" || h.encoding != "f64le" ||
        h.components != static_cast<int64_t>(h.dims.size()))
        throw IoError("not a displacement field volume: " + path.string());
    DisplacementField field(shape);
    const size_t need = field.components.size() * 8;
    if (bytes.size() - h.payload_offset != need)
        throw IoError("payload size mismatch: " + path.string());
    for (size_t i = 0; i < field.components.size(); ++i)
        field.components[i] = read_f64le(bytes.data() + h.payload_offset + 8 * i);
    return field;
}

LabelVolume read_labels(const fs::path& path) {
    const std::string bytes = read_all(path);
    const VolumeHeader h = parse_volume_header(bytes, path);
    if (h.kind != "labels" || h.encoding != "u16le" || h.components != 1)
        throw IoError("not a label volume: " + path.string());
    LabelVolume labels(GridShape(h.dims));
    const size_t need = labels.labels.size() * 2;
    if (bytes.size() - h.payload_offset != need)
        throw IoError("payload size mismatch: " + path.string());
    for (size_t i = 0; i < labels.labels.size(); ++i)
        labels.labels[i] = read_u16le(bytes.data() + h.payload_offset + 2 * i);
    return labels;
}

void write_landmarks(const fs::path& path, const LandmarkSet& lm, int ndim) {
    std::ostringstream os;
    os << "landmarks " << lm.size() << " " << ndim << "\n";
    for (size_t i = 0; i < lm.size(); ++i) {
        for (int a = 0; a < ndim; ++a)
            os << (a ? " " : "") << format_double(lm.moving[i][a]);
        for (int a = 0; a < ndim; ++a)
            os << " " << format_double(lm.fixed[i][a]);
        os << "\n";
    }
    atomic_write(path, os.str());
}

LandmarkSet read_landmarks(const fs::path& path, const GridShape& shape) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open: " + path.string());
    std::string tag;
    size_t count = 0;
    int ndim = 0;
    in >> tag >> count >> ndim;
    if (tag != "landmarks" || ndim != shape.ndim())
        throw IoError("bad landmark file: " + path.string());
    LandmarkSet lm;
    for (size_t i = 0; i < count; ++i) {
        Vec m, f;
        for (int a = 0; a < ndim; ++a)
            in >> m[a];
        for (int a = 0; a < ndim; ++a)
            in >> f[a];
        if (!in)
            throw IoError("truncated landmark file: " + path.string());
        lm.moving.push_back(m);
        lm.fixed.push_back(f);
    }
    validate_landmarks(lm, shape);
    return lm;
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

GridShape parse_shape(const std::string& text) {
    std::vector<int64_t> dims;
    std::string cur;
    for (char ch : text + "x") {
        if (ch == 'x' || ch == 'X') {
            if (cur.empty())
                throw ValueError("bad shape string: " + text);
            dims.push_back(std::stoll(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    return GridShape(dims);
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

std::vector<double> parse_spacing(const std::string& text) {
    std::vector<double> out;
    std::string cur;
    for (char ch : text + ",") {
        if (ch == ',') {
            if (cur.empty())
                throw ValueError("bad spacing string: " + text);
            out.push_back(std::stod(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    return out;
}

std::string spacing_to_text(const std::vector<double>& spacing) {
    std::string out;
    for (size_t i = 0; i < spacing.size(); ++i) {
        if (i)
            out += ",";
        out += format_double(spacing[i]);
    }
    return out;
}

} // namespace

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#')
            continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ValueError("config line " + std::to_string(lineno) + ": expected key=value");
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "alpha")
            cfg.sanity.alpha = std::stod(value);
        else if (key == "beta")
            cfg.sanity.beta = std::stod(value);
        else if (key == "lambda_r")
            cfg.sanity.lambda_r = std::stod(value);
        else if (key == "lambda_s")
            cfg.sanity.lambda_s = std::stod(value);
        else if (key == "lambda_c")
            cfg.sanity.lambda_c = std::stod(value);
        else if (key == "ncc_window")
            cfg.sanity.ncc_window = std::stoi(value);
        else if (key == "spacing")
            cfg.sanity.spacing = parse_spacing(value);
        else if (key == "backend")
            cfg.backend = value;
        else if (key == "similarity")
            cfg.similarity = value;
        else if (key == "shape")
            cfg.shape = value;
        else if (key == "pairs")
            cfg.pairs = std::stoi(value);
        else if (key == "magnitude")
            cfg.magnitude = std::stod(value);
        else if (key == "smoothness")
            cfg.smoothness = std::stod(value);
        else if (key == "steps")
            cfg.steps = std::stoi(value);
        else if (key == "epochs")
            cfg.epochs = std::stoi(value);
        else if (key == "lr")
            cfg.learning_rate = std::stod(value);
        else if (key == "seed")
            cfg.seed = std::stoull(value);
        else if (key == "backproject_coord_grad")
            cfg.backproject_coord_grad = value == "1" || value == "true";
        else if (key == "data_dir")
            cfg.data_dir = value;
        else if (key == "out_dir")
            cfg.out_dir = value;
        else
            throw ValueError("config line " + std::to_string(lineno) + ": unknown key '" + key +
                             "'");
    }
    if (cfg.backend != "model" && cfg.backend != "direct")
        throw ValueError("config: backend must be 'model' or 'direct'");
    if (cfg.similarity != "ncc" && cfg.similarity != "ssd")
        throw ValueError("config: similarity must be 'ncc' or 'ssd'");
    return cfg;
}

RunConfig parse_config_file(const fs::path& path) {
    return parse_config_text(read_all(path));
}

std::string config_to_text(const RunConfig& cfg) {
    std::ostringstream os;
    os << "alpha=" << format_double(cfg.sanity.alpha) << "\n";
    os << "beta=" << format_double(cfg.sanity.beta) << "\n";
    os << "lambda_r=" << format_double(cfg.sanity.lambda_r) << "\n";
    os << "lambda_s=" << format_double(cfg.sanity.lambda_s) << "\n";
    os << "lambda_c=" << format_double(cfg.sanity.lambda_c) << "\n";
    os << "ncc_window=" << cfg.sanity.ncc_window << "\n";
    if (!cfg.sanity.spacing.empty())
        os << "spacing=" << spacing_to_text(cfg.sanity.spacing) << "\n";
    os << "backend=" << cfg.backend << "\n";
    os << "similarity=" << cfg.similarity << "\n";
    os << "shape=" << cfg.shape << "\n";
    os << "pairs=" << cfg.pairs << "\n";
    os << "magnitude=" << format_double(cfg.magnitude) << "\n";
    os << "smoothness=" << format_double(cfg.smoothness) << "\n";
    os << "steps=" << cfg.steps << "\n";
    os << "epochs=" << cfg.epochs << "\n";
    os << "lr=" << format_double(cfg.effective_learning_rate()) << "\n";
    os << "seed=" << cfg.seed << "\n";
    os << "backproject_coord_grad=" << (cfg.backproject_coord_grad ? 1 : 0) << "\n";
    return os.str();
}

namespace {

std::string fnv1a_hex(const std::string& text) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
    return buf;
}

} // namespace

std::string config_hash(const RunConfig& cfg) { return fnv1a_hex(config_to_text(cfg)); }

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

CsvWriter::CsvWriter(const fs::path& path, const std::string& config_hash,
                     const std::vector<std::string>& header)
    : path_(path), tmp_path_(path.string() + ".tmp"), columns_(header.size()) {
    out_.open(tmp_path_, std::ios::binary | std::ios::trunc);
    if (!out_)
        throw IoError("cannot open for writing: " + tmp_path_.string());
    out_ << "# config_hash=" << config_hash << "\n";
    for (size_t i = 0; i < header.size(); ++i)
        out_ << (i ? "," : "") << header[i];
    out_ << "\n";
}

CsvWriter::~CsvWriter() {
    if (!finished_) {
        out_.close();
        std::error_code ec;
        fs::remove(tmp_path_, ec);
    }
}

void CsvWriter::row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_)
        throw ValueError("csv row has wrong number of columns");
    for (size_t i = 0; i < cells.size(); ++i)
        out_ << (i ? "," : "") << cells[i];
    out_ << "\n";
}

void CsvWriter::finish() {
    out_.close();
    if (!out_)
        throw IoError("write failed: " + tmp_path_.string());
    fs::rename(tmp_path_, path_);
    finished_ = true;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

void save_checkpoint(const fs::path& path, const TinyNet& net, const GridShape& grid,
                     const std::string& config_hash) {
    std::ostringstream head;
    head << kCheckpointMagic << "\n";
    head << "config_hash " << config_hash << "\n";
    head << "grid " << grid.to_string() << "\n";
    head << "ndim " << net.ndim << "\n";
    head << "hidden " << net.hidden << "\n";
    const std::vector<const ad::Parameter*> params = net.parameters();
    const char* names[] = {"w1", "b1", "w2", "b2", "w3", "b3", "gain"};
    head << "tensors " << params.size() << "\n";
    for (size_t i = 0; i < params.size(); ++i) {
        head << "tensor " << names[i];
        for (int64_t d : params[i]->value.shape)
            head << " " << d;
        head << "\n";
    }
    head << "data\n";
    std::string bytes = head.str();
    for (const ad::Parameter* p : params)
        for (double v : p->value.data)
            append_f64le(bytes, v);
    atomic_write(path, bytes);
}

Checkpoint load_checkpoint(const fs::path& path) {
    const std::string bytes = read_all(path);
    size_t pos = 0;
    auto next_line = [&]() {
        const size_t nl = bytes.find('\n', pos);
        if (nl == std::string::npos)
            throw IoError("truncated checkpoint: " + path.string());
        std::string line = bytes.substr(pos, nl - pos);
        pos = nl + 1;
        return line;
    };
    if (next_line() != kCheckpointMagic)
        throw IoError("bad checkpoint magic: " + path.string());
    std::string hash, grid_text;
    int ndim = 0, hidden = 0;
    size_t tensor_count = 0;
    std::vector<std::vector<int64_t>> shapes;
    for (;;) {
        const std::string line = next_line();
        if (line == "data")
            break;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "config_hash")
            ls >> hash;
        else if (key == "grid")
            ls >> grid_text;
        else if (key == "ndim")
            ls >> ndim;
        else if (key == "hidden")
            ls >> hidden;
        else if (key == "tensors")
            ls >> tensor_count;
        else if (key == "tensor") {
            std::string name;
            ls >> name;
            std::vector<int64_t> shape;
            int64_t d;
            while (ls >> d)
                shape.push_back(d);
            shapes.push_back(shape);
        } else
            throw IoError("unknown checkpoint key '" + key + "': " + path.string());
    }
    if (shapes.size() != tensor_count || tensor_count != 7)
        throw IoError("unexpected tensor manifest: " + path.string());

    Checkpoint ckpt{TinyNet::create(ndim, 0), parse_shape(grid_text), hash};
    ckpt.net.hidden = hidden;
    auto params = ckpt.net.parameters();
    for (size_t i = 0; i < params.size(); ++i) {
        ad::Tensor t = ad::Tensor::zeros(shapes[i]);
        for (size_t k = 0; k < t.data.size(); ++k) {
            if (pos + 8 > bytes.size())
                throw IoError("truncated checkpoint payload: " + path.string());
            t.data[k] = read_f64le(bytes.data() + pos);
            pos += 8;
        }
        params[i]->value = std::move(t);
        params[i]->grad = ad::Tensor::zeros(params[i]->value.shape);
    }
    if (pos != bytes.size())
        throw IoError("trailing bytes in checkpoint: " + path.string());
    return ckpt;
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

namespace {

std::string pair_dir_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "pair_%03d", index);
    return buf;
}

std::string manifest_body(const DatasetManifest& m) {
    std::ostringstream os;
    os << "shape " << m.shape << "\n";
    os << "pairs " << m.pairs << "\n";
    os << "magnitude " << format_double(m.magnitude) << "\n";
    os << "smoothness " << format_double(m.smoothness) << "\n";
    os << "seed " << m.seed << "\n";
    return os.str();
}

} // namespace

DatasetManifest write_dataset(const fs::path& dir, const GridShape& shape, int pairs,
                              double magnitude, double smoothness, uint64_t seed) {
    if (pairs < 1)
        throw ValueError("write_dataset: need at least one pair");
    fs::create_directories(dir);
    DatasetManifest manifest;
    manifest.shape = shape.to_string();
    manifest.pairs = pairs;
    manifest.magnitude = magnitude;
    manifest.smoothness = smoothness;
    manifest.seed = seed;
    manifest.hash = fnv1a_hex(manifest_body(manifest));
    for (int i = 0; i < pairs; ++i) {
        const SyntheticPair pair =
            make_pair(shape, magnitude, smoothness, seed + 1000ull * static_cast<uint64_t>(i));
        const std::string name = pair_dir_name(i);
        const fs::path pdir = dir / name;
        fs::create_directories(pdir);
        write_image(pdir / "moving.sreg", pair.moving);
        write_image(pdir / "fixed.sreg", pair.fixed);
        write_labels(pdir / "moving_labels.sreg", pair.moving_labels);
        write_labels(pdir / "fixed_labels.sreg", pair.fixed_labels);
        write_field(pdir / "true_field.sreg", pair.true_field);
        write_landmarks(pdir / "landmarks.txt", pair.landmarks, shape.ndim());
        manifest.pair_dirs.push_back(name);
    }
    std::ostringstream os;
    os << kManifestMagic << "\n";
    os << manifest_body(manifest);
    os << "config_hash " << manifest.hash << "\n";
    for (const std::string& p : manifest.pair_dirs)
        os << "pair " << p << "\n";
    atomic_write(dir / "manifest.txt", os.str());
    return manifest;
}

DatasetManifest read_manifest(const fs::path& dir) {
    std::ifstream in(dir / "manifest.txt");
    if (!in)
        throw IoError("cannot open manifest: " + (dir / "manifest.txt").string());
    std::string line;
    if (!std::getline(in, line) || line != kManifestMagic)
        throw IoError("bad manifest magic: " + dir.string());
    DatasetManifest m;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "shape")
            ls >> m.shape;
        else if (key == "pairs")
            ls >> m.pairs;
        else if (key == "magnitude")
            ls >> m.magnitude;
        else if (key == "smoothness")
            ls >> m.smoothness;
        else if (key == "seed")
            ls >> m.seed;
        else if (key == "config_hash")
            ls >> m.hash;
        else if (key == "pair") {
            std::string name;
            ls >> name;
            m.pair_dirs.push_back(name);
        } else
            throw IoError("unknown manifest key '" + key + "'");
    }
    return m;
}

LoadedPair load_pair(const fs::path& pair_dir) {
    LoadedPair p;
    p.moving = read_image(pair_dir / "moving.sreg");
    p.fixed = read_image(pair_dir / "fixed.sreg");
    p.moving_labels = read_labels(pair_dir / "moving_labels.sreg");
    p.fixed_labels = read_labels(pair_dir / "fixed_labels.sreg");
    p.true_field = read_field(pair_dir / "true_field.sreg");
    p.landmarks = read_landmarks(pair_dir / "landmarks.txt", p.moving.shape);
    return p;
}

} // namespace sreg
