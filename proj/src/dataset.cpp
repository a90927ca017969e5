#include "iconvec/dataset.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "iconvec/errors.h"
#include "iconvec/svg.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace iconvec {

namespace {
constexpr char kMagic[8] = {'I', 'V', 'C', 'O', 'R', 'P', '0', '1'};
constexpr size_t kIdBytes = 64;
}  // namespace

// ---------------------------------------------------------------------------
// Images

Image read_pgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read " + path);
    std::string magic;
    f >> magic;
    if (magic != "P5" && magic != "P2") throw ParseError("pgm: expected P5 or P2 in " + path, 0);
    auto next_int = [&]() -> int {
        // Skips whitespace and '#' comment lines.
        for (;;) {
            int c = f.peek();
            if (c == '#') {
                std::string line;
                std::getline(f, line);
            } else if (std::isspace(c)) {
                f.get();
            } else {
                break;
            }
        }
        int v = -1;
        f >> v;
        if (v < 0) throw ParseError("pgm: malformed header in " + path, 0);
        return v;
    };
    int w = next_int(), h = next_int(), maxval = next_int();
    if (w != h || w <= 0) throw ShapeError("pgm: expected a square image, got " +
                                           std::to_string(w) + "x" + std::to_string(h));
    Image img;
    img.size = w;
    img.v.resize(size_t(w) * h);
    if (magic == "P5") {
        f.get();  // single whitespace after maxval
        std::vector<uint8_t> raw(img.v.size());
        f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
        if (!f) throw IoError("pgm: truncated pixel data in " + path);
        for (size_t i = 0; i < raw.size(); ++i) img.v[i] = raw[i] / double(maxval);
    } else {
        for (double& px : img.v) {
            int v = -1;
            f >> v;
            if (v < 0) throw ParseError("pgm: truncated pixel data in " + path, 0);
            px = v / double(maxval);
        }
    }
    return img;
}

Image mask_to_image(const RasterMask& mask) {
    Image img;
    img.size = mask.resolution;
    img.v.resize(mask.bits.size());
    for (size_t i = 0; i < mask.bits.size(); ++i) img.v[i] = mask.bits[i] ? 0.0 : 1.0;
    return img;
}

RasterMask image_to_mask(const Image& image, double threshold) {
    RasterMask mask = RasterMask::empty(image.size);
    for (size_t i = 0; i < image.v.size(); ++i) mask.bits[i] = image.v[i] < threshold ? 1 : 0;
    return mask;
}

Image render_input(const SvgScript& script, int size) {
    return mask_to_image(rasterize(script, size));
}

// ---------------------------------------------------------------------------
// Filtering and synthesis

FilterResult filter_icon(const SvgScript& script, const TokenLimits& limits) {
    size_t n = script.paths.size();
    if (n > size_t(limits.n_paths))
        return {false, "paths=" + std::to_string(n) + ">" + std::to_string(limits.n_paths)};
    for (const Path& p : script.paths) {
        if (p.commands.size() > size_t(limits.n_cmds_max))
            return {false, "commands=" + std::to_string(p.commands.size()) + ">" +
                               std::to_string(limits.n_cmds_max)};
    }
    return {true, ""};
}

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Path synth_rect(std::mt19937_64& rng) {
    double w = uniform(rng, 0.15, 0.5);
    double h = uniform(rng, 0.15, 0.5);
    double x = uniform(rng, 0.1, 0.9 - w);
    double y = uniform(rng, 0.1, 0.9 - h);
    return Path{rect_to_commands(x, y, w, h)};
}

Path synth_circle(std::mt19937_64& rng) {
    double r = uniform(rng, 0.08, 0.25);
    double cx = uniform(rng, 0.1 + r, 0.9 - r);
    double cy = uniform(rng, 0.1 + r, 0.9 - r);
    return Path{circle_to_commands({cx, cy}, r)};
}

// Rectilinear staircase polyline; the implicit fill closure gives it a
// solid footprint.
Path synth_polyline(std::mt19937_64& rng) {
    int segs = std::uniform_int_distribution<int>(2, 6)(rng);
    Vec2 p{uniform(rng, 0.2, 0.8), uniform(rng, 0.2, 0.8)};
    std::vector<Vec2> pts{p};
    bool horizontal = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
    for (int i = 0; i < segs; ++i) {
        double len = uniform(rng, 0.15, 0.4);
        double& c = horizontal ? p.x : p.y;
        double lo = 0.1, hi = 0.9;
        // Walk toward whichever side has room.
        if (c + len > hi) len = -len;
        if (c + len < lo) len = (hi - c) * 0.8;
        c += len;
        pts.push_back(p);
        horizontal = !horizontal;
    }
    return Path{polyline_to_commands(pts, false)};
}

}  // namespace

SvgScript synth_icon(std::mt19937_64& rng) {
    SvgScript script;
    int n = std::uniform_int_distribution<int>(1, 4)(rng);
    for (int i = 0; i < n; ++i) {
        switch (std::uniform_int_distribution<int>(0, 2)(rng)) {
            case 0: script.paths.push_back(synth_rect(rng)); break;
            case 1: script.paths.push_back(synth_circle(rng)); break;
            default: script.paths.push_back(synth_polyline(rng)); break;
        }
    }
    canonical_sort(script);
    return script;
}

// ---------------------------------------------------------------------------
// Manifest

std::string SplitManifest::to_json() const {
    json j;
    j["seed"] = seed;
    j["counts"] = {{"scanned", scanned},
                   {"accepted", accepted},
                   {"filtered", filtered.size()},
                   {"skipped", skipped.size()},
                   {"train", train_ids.size()},
                   {"eval", eval_ids.size()}};
    j["train_ids"] = train_ids;
    j["eval_ids"] = eval_ids;
    json jf = json::array(), js = json::array();
    for (const auto& [id, reason] : filtered) jf.push_back({{"id", id}, {"reason", reason}});
    for (const auto& [file, reason] : skipped) js.push_back({{"file", file}, {"reason", reason}});
    j["filtered"] = jf;
    j["skipped"] = js;
    return j.dump(2) + "\n";
}

SplitManifest SplitManifest::from_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read manifest " + path);
    json j;
    try {
        f >> j;
        SplitManifest m;
        m.seed = j.at("seed").get<uint64_t>();
        m.train_ids = j.at("train_ids").get<std::vector<std::string>>();
        m.eval_ids = j.at("eval_ids").get<std::vector<std::string>>();
        m.scanned = j.at("counts").at("scanned").get<size_t>();
        m.accepted = j.at("counts").at("accepted").get<size_t>();
        for (const auto& e : j.at("filtered")) m.filtered.emplace_back(e.at("id"), e.at("reason"));
        for (const auto& e : j.at("skipped")) m.skipped.emplace_back(e.at("file"), e.at("reason"));
        return m;
    } catch (const json::exception& e) {
        throw IoError("manifest " + path + ": " + e.what());
    }
}

void SplitManifest::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write manifest " + path);
    f << to_json();
}

// ---------------------------------------------------------------------------
// Container

size_t CorpusHeader::record_size() const {
    size_t np = size_t(limits.n_paths), lm = size_t(limits.l_max());
    return kIdBytes + size_t(image_size) * image_size + np * lm * 2 + np * lm * 4 + np;
}

std::string CorpusHeader::to_json() const {
    json j;
    j["schema_version"] = schema_version;
    j["n_paths"] = limits.n_paths;
    j["n_cmds_max"] = limits.n_cmds_max;
    j["l_max"] = limits.l_max();
    j["image_size"] = image_size;
    j["dtypes"] = {{"image", "u8"}, {"types", "i16"}, {"args", "f32"}, {"vis", "u8"}};
    j["id_bytes"] = kIdBytes;
    return j.dump();
}

CorpusHeader CorpusHeader::from_json(const std::string& text) {
    try {
        json j = json::parse(text);
        CorpusHeader h;
        h.schema_version = j.at("schema_version").get<int>();
        h.limits.n_paths = j.at("n_paths").get<int>();
        h.limits.n_cmds_max = j.at("n_cmds_max").get<int>();
        h.image_size = j.at("image_size").get<int>();
        if (j.at("l_max").get<int>() != h.limits.l_max())
            throw IoError("corpus header: inconsistent l_max");
        return h;
    } catch (const json::exception& e) {
        throw IoError(std::string("corpus header: ") + e.what());
    }
}

struct CorpusWriter::Impl {
    std::ofstream f;
    CorpusHeader header;
    uint64_t count = 0;
    bool open = false;
};

CorpusWriter::CorpusWriter(const std::string& path, const CorpusHeader& header)
    : impl_(std::make_unique<Impl>()) {
    impl_->header = header;
    impl_->f.open(path, std::ios::binary | std::ios::trunc);
    if (!impl_->f) throw IoError("cannot write corpus " + path);
    impl_->open = true;
    impl_->f.write(kMagic, 8);
    uint64_t count = 0;
    impl_->f.write(reinterpret_cast<const char*>(&count), 8);
    std::string hj = header.to_json();
    uint32_t len = static_cast<uint32_t>(hj.size());
    impl_->f.write(reinterpret_cast<const char*>(&len), 4);
    impl_->f.write(hj.data(), static_cast<std::streamsize>(hj.size()));
}

CorpusWriter::~CorpusWriter() {
    try {
        close();
    } catch (...) {
    }
}

void CorpusWriter::append(const TrainRecord& record) {
    const CorpusHeader& h = impl_->header;
    if (record.icon_id.size() >= kIdBytes) throw IoError("icon id too long: " + record.icon_id);
    if (record.image.size != h.image_size) throw ShapeError("record image size mismatch");
    if (record.tokens.n_paths() != h.limits.n_paths ||
        static_cast<int>(record.tokens.paths[0].types.size()) != h.limits.l_max())
        throw ShapeError("record token shape mismatch");

    char id[kIdBytes] = {};
    std::memcpy(id, record.icon_id.data(), record.icon_id.size());
    impl_->f.write(id, kIdBytes);
    std::vector<uint8_t> img(record.image.v.size());
    for (size_t i = 0; i < img.size(); ++i)
        img[i] = static_cast<uint8_t>(std::lround(std::clamp(record.image.v[i], 0.0, 1.0) * 255.0));
    impl_->f.write(reinterpret_cast<const char*>(img.data()), static_cast<std::streamsize>(img.size()));
    for (const TokenizedPath& tp : record.tokens.paths)
        impl_->f.write(reinterpret_cast<const char*>(tp.types.data()),
                       static_cast<std::streamsize>(tp.types.size() * 2));
    for (const TokenizedPath& tp : record.tokens.paths) {
        std::vector<float> a(tp.args.begin(), tp.args.end());
        impl_->f.write(reinterpret_cast<const char*>(a.data()),
                       static_cast<std::streamsize>(a.size() * 4));
    }
    impl_->f.write(reinterpret_cast<const char*>(record.tokens.visibility.data()),
                   static_cast<std::streamsize>(record.tokens.visibility.size()));
    if (!impl_->f) throw IoError("corpus write failed");
    ++impl_->count;
}

void CorpusWriter::close() {
    if (!impl_ || !impl_->open) return;
    impl_->f.seekp(8);
    impl_->f.write(reinterpret_cast<const char*>(&impl_->count), 8);
    impl_->f.close();
    impl_->open = false;
    if (impl_->f.fail()) throw IoError("corpus close failed");
}

struct CorpusReader::Impl {
    mutable std::ifstream f;
    CorpusHeader header;
    uint64_t count = 0;
    size_t data_offset = 0;
    std::vector<std::string> ids;
};

CorpusReader::CorpusReader(const std::string& path) : impl_(std::make_unique<Impl>()) {
    impl_->f.open(path, std::ios::binary);
    if (!impl_->f) throw IoError("cannot read corpus " + path);
    char magic[8];
    impl_->f.read(magic, 8);
    if (!impl_->f || std::memcmp(magic, kMagic, 8) != 0)
        throw IoError("not a corpus container: " + path);
    impl_->f.read(reinterpret_cast<char*>(&impl_->count), 8);
    uint32_t len = 0;
    impl_->f.read(reinterpret_cast<char*>(&len), 4);
    std::string hj(len, '\0');
    impl_->f.read(hj.data(), len);
    if (!impl_->f) throw IoError("truncated corpus header: " + path);
    impl_->header = CorpusHeader::from_json(hj);
    impl_->data_offset = 20 + len;

    impl_->ids.reserve(impl_->count);
    size_t rec_size = impl_->header.record_size();
    char id[kIdBytes + 1] = {};
    for (uint64_t i = 0; i < impl_->count; ++i) {
        impl_->f.seekg(static_cast<std::streamoff>(impl_->data_offset + i * rec_size));
        impl_->f.read(id, kIdBytes);
        if (!impl_->f) throw IoError("truncated corpus record in " + path);
        impl_->ids.emplace_back(id);
    }
}

CorpusReader::~CorpusReader() = default;

const CorpusHeader& CorpusReader::header() const { return impl_->header; }
size_t CorpusReader::count() const { return impl_->count; }
const std::vector<std::string>& CorpusReader::ids() const { return impl_->ids; }

size_t CorpusReader::index_of(const std::string& icon_id) const {
    for (size_t i = 0; i < impl_->ids.size(); ++i)
        if (impl_->ids[i] == icon_id) return i;
    throw IoError("icon id not in corpus: " + icon_id);
}

TrainRecord CorpusReader::record(size_t index) const {
    if (index >= impl_->count) throw IoError("record index out of range");
    const CorpusHeader& h = impl_->header;
    impl_->f.clear();
    impl_->f.seekg(static_cast<std::streamoff>(impl_->data_offset + index * h.record_size()));

    TrainRecord r;
    char id[kIdBytes + 1] = {};
    impl_->f.read(id, kIdBytes);
    r.icon_id = id;
    size_t npx = size_t(h.image_size) * h.image_size;
    std::vector<uint8_t> img(npx);
    impl_->f.read(reinterpret_cast<char*>(img.data()), static_cast<std::streamsize>(npx));
    r.image.size = h.image_size;
    r.image.v.resize(npx);
    for (size_t i = 0; i < npx; ++i) r.image.v[i] = img[i] / 255.0;

    int np = h.limits.n_paths, lm = h.limits.l_max();
    r.tokens.paths.assign(np, TokenizedPath::padded(lm));
    for (TokenizedPath& tp : r.tokens.paths)
        impl_->f.read(reinterpret_cast<char*>(tp.types.data()),
                      static_cast<std::streamsize>(size_t(lm) * 2));
    std::vector<float> a(static_cast<size_t>(lm), 0.0f);
    for (TokenizedPath& tp : r.tokens.paths) {
        impl_->f.read(reinterpret_cast<char*>(a.data()), static_cast<std::streamsize>(size_t(lm) * 4));
        for (int k = 0; k < lm; ++k) tp.args[k] = a[k];
    }
    r.tokens.visibility.resize(np);
    impl_->f.read(reinterpret_cast<char*>(r.tokens.visibility.data()), np);
    if (!impl_->f) throw IoError("truncated corpus record");
    return r;
}

// ---------------------------------------------------------------------------
// Corpus building

namespace {

SplitManifest build_common(std::vector<std::pair<std::string, SvgScript>>& accepted,
                           SplitManifest manifest, const std::string& out_path, uint64_t seed,
                           const CorpusHeader& header, double train_fraction) {
    manifest.seed = seed;
    manifest.accepted = accepted.size();

    CorpusWriter writer(out_path, header);
    for (const auto& [id, script] : accepted) {
        TrainRecord r;
        r.icon_id = id;
        r.tokens = encode_script(script, header.limits);
        r.image = render_input(script, header.image_size);
        writer.append(r);
    }
    writer.close();

    std::vector<size_t> order(accepted.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    size_t n_train = static_cast<size_t>(std::floor(train_fraction * double(order.size())));
    for (size_t k = 0; k < order.size(); ++k) {
        const std::string& id = accepted[order[k]].first;
        (k < n_train ? manifest.train_ids : manifest.eval_ids).push_back(id);
    }
    manifest.save(manifest_path_for(out_path));
    return manifest;
}

std::string sanitize_id(const fs::path& rel) {
    std::string id = rel.string();
    if (id.size() > 4 && id.ends_with(".svg")) id.resize(id.size() - 4);
    for (char& c : id)
        if (c == '/' || c == '\\' || c == '\t' || c == ' ') c = '_';
    if (id.size() >= 63) id = id.substr(id.size() - 63);
    return id;
}

}  // namespace

SplitManifest build_corpus(const std::string& src_dir, const std::string& out_path, uint64_t seed,
                           const CorpusHeader& header, double train_fraction) {
    std::vector<fs::path> files;
    if (fs::exists(src_dir))
        for (const auto& entry : fs::recursive_directory_iterator(src_dir))
            if (entry.is_regular_file() && entry.path().extension() == ".svg")
                files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    SplitManifest manifest;
    std::vector<std::pair<std::string, SvgScript>> accepted;
    for (const fs::path& file : files) {
        ++manifest.scanned;
        std::string id = sanitize_id(fs::relative(file, src_dir));
        try {
            std::ifstream f(file, std::ios::binary);
            if (!f) throw IoError("unreadable file");
            std::stringstream ss;
            ss << f.rdbuf();
            SvgScript script = canonicalize(ss.str());
            FilterResult res = filter_icon(script, header.limits);
            if (!res.accepted) {
                manifest.filtered.emplace_back(id, res.reason);
                continue;
            }
            accepted.emplace_back(id, std::move(script));
        } catch (const Error& e) {
            manifest.skipped.emplace_back(file.string(), e.what());
        }
    }
    return build_common(accepted, std::move(manifest), out_path, seed, header, train_fraction);
}

SplitManifest build_corpus_from_scripts(const std::vector<std::pair<std::string, SvgScript>>& icons,
                                        const std::string& out_path, uint64_t seed,
                                        const CorpusHeader& header, double train_fraction) {
    SplitManifest manifest;
    std::vector<std::pair<std::string, SvgScript>> accepted;
    for (const auto& [id, script] : icons) {
        ++manifest.scanned;
        FilterResult res = filter_icon(script, header.limits);
        if (!res.accepted) {
            manifest.filtered.emplace_back(id, res.reason);
            continue;
        }
        accepted.push_back({id, script});
    }
    return build_common(accepted, std::move(manifest), out_path, seed, header, train_fraction);
}

}  // namespace iconvec
