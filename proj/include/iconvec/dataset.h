#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "iconvec/geometry.h"
#include "iconvec/raster.h"
#include "iconvec/tokenizer.h"

namespace iconvec {

// Grayscale image in [0,1]; 0 = black glyph, 1 = background.
struct Image {
    int size = 0;
    std::vector<double> v;  // row-major, size*size

    bool operator==(const Image&) const = default;
};

Image read_pgm(const std::string& path);

struct TrainRecord {
    std::string icon_id;
    Image image;
    TokenizedIcon tokens;
};

struct FilterResult {
    bool accepted = false;
    std::string reason;  // empty when accepted
};

// The corpus inclusion rule: accept iff path count <= n_paths and every
// path's command count <= n_cmds_max (boundaries inclusive).
FilterResult filter_icon(const SvgScript& script, const TokenLimits& limits = {});

// Rasterization of the script as the model input image: black glyph on
// white, i.e. 1 - mask.
Image render_input(const SvgScript& script, int size);
Image mask_to_image(const RasterMask& mask);
RasterMask image_to_mask(const Image& image, double threshold = 0.5);

// Random desk-scale icon: 1-4 paths drawn from axis-aligned rects, circles
// (four cubics) and rectilinear polylines of 2-6 segments, all within
// [0.1,0.9]^2 and always within the default filter limits.
SvgScript synth_icon(std::mt19937_64& rng);

struct SplitManifest {
    uint64_t seed = 0;
    std::vector<std::string> train_ids;
    std::vector<std::string> eval_ids;
    size_t scanned = 0;
    size_t accepted = 0;
    std::vector<std::pair<std::string, std::string>> filtered;  // id, reason
    std::vector<std::pair<std::string, std::string>> skipped;   // file, reason

    std::string to_json() const;
    static SplitManifest from_json_file(const std::string& path);
    void save(const std::string& path) const;
};

inline std::string manifest_path_for(const std::string& corpus_path) {
    return corpus_path + ".manifest.json";
}

// ---------------------------------------------------------------------------
// Record container: fixed preamble + JSON header + fixed-size records, so
// shuffled training gets constant-time random access.

struct CorpusHeader {
    int schema_version = 1;
    TokenLimits limits;
    int image_size = 64;

    size_t record_size() const;
    std::string to_json() const;
    static CorpusHeader from_json(const std::string& text);
    bool operator==(const CorpusHeader&) const = default;
};

class CorpusWriter {
  public:
    CorpusWriter(const std::string& path, const CorpusHeader& header);
    ~CorpusWriter();
    void append(const TrainRecord& record);
    void close();  // patches the record count; called by the destructor too

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

class CorpusReader {
  public:
    explicit CorpusReader(const std::string& path);
    ~CorpusReader();

    const CorpusHeader& header() const;
    size_t count() const;
    TrainRecord record(size_t index) const;
    const std::vector<std::string>& ids() const;
    // Index of an icon id; throws IoError when absent.
    size_t index_of(const std::string& icon_id) const;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Canonicalize -> filter -> encode -> render over every .svg under src_dir
// (sorted scan order). Unreadable or unparseable files are skipped and
// logged in the manifest. The split shuffles accepted ids with `seed` and
// takes floor(train_fraction * n) for training.
SplitManifest build_corpus(const std::string& src_dir, const std::string& out_path,
                           uint64_t seed, const CorpusHeader& header,
                           double train_fraction = 0.7);

// Same pipeline over in-memory scripts (synthetic corpora).
SplitManifest build_corpus_from_scripts(const std::vector<std::pair<std::string, SvgScript>>& icons,
                                        const std::string& out_path, uint64_t seed,
                                        const CorpusHeader& header, double train_fraction = 0.7);

}  // namespace iconvec
