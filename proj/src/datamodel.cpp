#include "wafl/datamodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "wafl/binary_io.hpp"
#include "wafl/error.hpp"

namespace wafl {

namespace {

using nlohmann::json;

constexpr char kFeatureMagic[8] = {'W', 'A', 'F', 'L', 'F', 'T', '0', '1'};
constexpr std::uint32_t kFeatureVersion = 1;
constexpr std::size_t kMaxElements = std::size_t{1} << 28;

double overlap(double a_s, double a_e, double b_s, double b_e) noexcept {
    return std::min(a_e, b_e) - std::max(a_s, b_s);
}

bool covers(Modality segment, Modality target) noexcept {
    return segment == Modality::Both || segment == target;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_matrix(std::ostream& os, const FeatureMatrix& m) {
    binio::write_u32(os, static_cast<std::uint32_t>(m.rows()));
    binio::write_u32(os, static_cast<std::uint32_t>(m.cols()));
    os.write(reinterpret_cast<const char*>(m.flat().data()),
             static_cast<std::streamsize>(m.size() * sizeof(float)));
}

FeatureMatrix read_matrix(std::istream& is) {
    const std::size_t rows = binio::read_u32(is);
    const std::size_t cols = binio::read_u32(is);
    if (rows * cols > kMaxElements) throw Error(ErrorCode::FormatError, "feature matrix too large");
    FeatureMatrix m(rows, cols);
    if (m.size() > 0) {
        binio::read_exact(is, reinterpret_cast<char*>(m.flat().data()), m.size() * sizeof(float));
    }
    for (float v : m.flat()) {
        if (!std::isfinite(v)) throw Error(ErrorCode::FormatError, "non-finite feature value");
    }
    return m;
}

}  // namespace

std::string_view to_string(Label label) noexcept { return label == Label::Fake ? "fake" : "real"; }

std::string_view to_string(Modality modality) noexcept {
    switch (modality) {
        case Modality::Visual: return "visual";
        case Modality::Audio: return "audio";
        case Modality::Both: return "both";
    }
    return "both";
}

std::string_view to_string(PadStrategy strategy) noexcept {
    return strategy == PadStrategy::Reflection ? "reflection" : "trailing";
}

Label parse_label(std::string_view text) {
    if (text == "real") return Label::Real;
    if (text == "fake") return Label::Fake;
    throw Error(ErrorCode::FormatError, "unknown label '" + std::string(text) + "'");
}

Modality parse_modality(std::string_view text) {
    if (text == "visual") return Modality::Visual;
    if (text == "audio") return Modality::Audio;
    if (text == "both") return Modality::Both;
    throw Error(ErrorCode::FormatError, "unknown modality '" + std::string(text) + "'");
}

PadStrategy parse_pad_strategy(std::string_view text) {
    if (text == "reflection") return PadStrategy::Reflection;
    if (text == "trailing") return PadStrategy::Trailing;
    throw Error(ErrorCode::InvalidConfig, "unknown padding strategy '" + std::string(text) + "'");
}

void PadConfig::validate() const {
    if (target_T_v < 1 || target_T_a < 1) {
        throw Error(ErrorCode::InvalidConfig, "padding targets must be >= 1");
    }
}

// ---------------------------------------------------------------------------

std::vector<WordToken> segment_words(const std::vector<TranscriptEntry>& transcript, double duration) {
    if (!(std::isfinite(duration) && duration > 0.0)) {
        throw Error(ErrorCode::InvalidInterval, "duration must be finite and positive");
    }
    std::vector<WordToken> tokens;
    tokens.reserve(transcript.size());
    for (const auto& [word, t_s, t_e] : transcript) {
        if (!std::isfinite(t_s) || !std::isfinite(t_e) || t_s >= t_e) {
            throw Error(ErrorCode::InvalidInterval, "word '" + word + "' has t_s >= t_e");
        }
        tokens.push_back(WordToken{word, t_s, t_e, Label::Real, Label::Real});
    }
    std::stable_sort(tokens.begin(), tokens.end(),
                     [](const WordToken& a, const WordToken& b) { return a.t_s < b.t_s; });
    for (std::size_t i = 1; i < tokens.size(); ++i) {
        if (tokens[i - 1].t_e > tokens[i].t_s) {
            throw Error(ErrorCode::OverlappingTokens,
                        "'" + tokens[i - 1].word + "' overlaps '" + tokens[i].word + "'");
        }
    }
    std::vector<WordToken> clipped;
    clipped.reserve(tokens.size());
    for (auto& tok : tokens) {
        tok.t_s = std::clamp(tok.t_s, 0.0, duration);
        tok.t_e = std::clamp(tok.t_e, 0.0, duration);
        // Words entirely outside the video vanish after clipping.
        if (tok.t_s < tok.t_e) clipped.push_back(std::move(tok));
    }
    return clipped;
}

std::vector<WordToken> label_tokens(std::vector<WordToken> tokens,
                                    const std::vector<ForgerySegment>& gt_segments) {
    for (auto& tok : tokens) {
        tok.label_v = Label::Real;
        tok.label_a = Label::Real;
        for (const auto& seg : gt_segments) {
            if (overlap(tok.t_s, tok.t_e, seg.t_s, seg.t_e) <= 0.0) continue;
            if (covers(seg.modality, Modality::Visual)) tok.label_v = Label::Fake;
            if (covers(seg.modality, Modality::Audio)) tok.label_a = Label::Fake;
        }
    }
    return tokens;
}

template <typename T>
Matrix<T> pad_sequence(const Matrix<T>& seq, std::size_t target_T, PadStrategy strategy) {
    const std::size_t T_in = seq.rows();
    if (T_in == 0) throw Error(ErrorCode::EmptySequence, "cannot pad a sequence with zero rows");
    if (target_T == 0) throw Error(ErrorCode::InvalidConfig, "padding target must be >= 1");
    const std::size_t k = seq.cols();
    Matrix<T> out(target_T, k);
    const std::size_t keep = std::min(T_in, target_T);
    for (std::size_t i = 0; i < keep; ++i) std::ranges::copy(seq.row(i), out.row(i).begin());
    if (strategy == PadStrategy::Trailing) return out;

    for (std::size_t i = keep; i < target_T; ++i) {
        std::size_t src = 0;
        if (T_in > 1) {
            const std::size_t period = 2 * (T_in - 1);
            const std::size_t p = i % period;
            src = p < T_in ? p : period - p;
        }
        std::ranges::copy(seq.row(src), out.row(i).begin());
    }
    return out;
}

template FeatureMatrix pad_sequence(const FeatureMatrix&, std::size_t, PadStrategy);
template Tensor pad_sequence(const Tensor&, std::size_t, PadStrategy);

TokenFeatures pad_token(const TokenFeatures& raw, const PadConfig& cfg) {
    return TokenFeatures{pad_sequence(raw.visual, cfg.target_T_v, cfg.strategy_v),
                         pad_sequence(raw.audio, cfg.target_T_a, cfg.strategy_a)};
}

// ---------------------------------------------------------------------------

void Dataset::validate() const {
    std::size_t kv = 0, ka = 0;
    bool first = true;
    for (const auto& video : videos) {
        auto it = features.find(video.id);
        if (it == features.end()) {
            if (video.tokens.empty()) continue;
            throw Error(ErrorCode::MissingFeatures, "no features for video '" + video.id + "'");
        }
        if (it->second.size() != video.tokens.size()) {
            throw Error(ErrorCode::MissingFeatures,
                        "video '" + video.id + "' has " + std::to_string(video.tokens.size()) +
                            " tokens but " + std::to_string(it->second.size()) + " feature entries");
        }
        for (const auto& tf : it->second) {
            if (first) {
                kv = tf.visual.cols();
                ka = tf.audio.cols();
                first = false;
            }
            if (tf.visual.cols() != kv || tf.audio.cols() != ka) {
                throw Error(ErrorCode::DimensionMismatch, "feature dims vary in video '" + video.id + "'");
            }
            if (tf.visual.rows() == 0 || tf.audio.rows() == 0) {
                throw Error(ErrorCode::DimensionMismatch, "empty feature sequence in video '" + video.id + "'");
            }
        }
    }
}

std::size_t Dataset::token_count() const noexcept {
    std::size_t n = 0;
    for (const auto& v : videos) n += v.tokens.size();
    return n;
}

std::size_t Dataset::k_v() const {
    for (const auto& [id, toks] : features) {
        if (!toks.empty()) return toks.front().visual.cols();
    }
    return 0;
}

std::size_t Dataset::k_a() const {
    for (const auto& [id, toks] : features) {
        if (!toks.empty()) return toks.front().audio.cols();
    }
    return 0;
}

const TokenFeatures& Dataset::token_features(std::size_t video, std::size_t token) const {
    return features.at(videos.at(video).id).at(token);
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset, std::size_t count) {
    std::pair<Dataset, Dataset> out;
    for (std::size_t i = 0; i < dataset.videos.size(); ++i) {
        Dataset& dst = i < count ? out.first : out.second;
        const auto& video = dataset.videos[i];
        dst.videos.push_back(video);
        if (auto it = dataset.features.find(video.id); it != dataset.features.end()) {
            dst.features.emplace(video.id, it->second);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Manifest (JSON)

std::vector<VideoRecord> load_manifest(const std::filesystem::path& path) {
    json doc;
    try {
        doc = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::FormatError, path.string() + ": " + e.what());
    }
    std::vector<VideoRecord> records;
    try {
        for (const auto& jv : doc.at("videos")) {
            VideoRecord rec;
            rec.id = jv.at("id").get<std::string>();
            rec.duration = jv.at("duration").get<double>();
            if (jv.contains("tokens")) {
                for (const auto& jt : jv.at("tokens")) {
                    WordToken tok;
                    tok.word = jt.value("word", std::string{});
                    tok.t_s = jt.at("t_s").get<double>();
                    tok.t_e = jt.at("t_e").get<double>();
                    tok.label_v = parse_label(jt.value("label_v", std::string{"real"}));
                    tok.label_a = parse_label(jt.value("label_a", std::string{"real"}));
                    if (!(tok.t_s < tok.t_e)) {
                        throw Error(ErrorCode::InvalidInterval, "token in '" + rec.id + "' has t_s >= t_e");
                    }
                    rec.tokens.push_back(std::move(tok));
                }
            }
            if (jv.contains("gt_segments")) {
                for (const auto& js : jv.at("gt_segments")) {
                    ForgerySegment seg;
                    seg.t_s = js.at("t_s").get<double>();
                    seg.t_e = js.at("t_e").get<double>();
                    seg.modality = parse_modality(js.value("modality", std::string{"both"}));
                    if (!(seg.t_s < seg.t_e)) {
                        throw Error(ErrorCode::InvalidInterval, "segment in '" + rec.id + "' has t_s >= t_e");
                    }
                    rec.gt_segments.push_back(seg);
                }
            }
            records.push_back(std::move(rec));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::FormatError, path.string() + ": " + e.what());
    }
    return records;
}

void save_manifest(const std::vector<VideoRecord>& records, const std::filesystem::path& path) {
    json videos = json::array();
    for (const auto& rec : records) {
        json tokens = json::array();
        for (const auto& tok : rec.tokens) {
            tokens.push_back({{"word", tok.word},
                              {"t_s", tok.t_s},
                              {"t_e", tok.t_e},
                              {"label_v", to_string(tok.label_v)},
                              {"label_a", to_string(tok.label_a)}});
        }
        json segments = json::array();
        for (const auto& seg : rec.gt_segments) {
            segments.push_back({{"t_s", seg.t_s}, {"t_e", seg.t_e}, {"modality", to_string(seg.modality)}});
        }
        videos.push_back({{"id", rec.id},
                          {"duration", rec.duration},
                          {"tokens", std::move(tokens)},
                          {"gt_segments", std::move(segments)}});
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << json{{"videos", std::move(videos)}}.dump(1) << '\n';
}

// ---------------------------------------------------------------------------
// Feature store (binary)

FeatureStore load_features(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    char magic[8];
    binio::read_exact(in, magic, sizeof magic);
    if (!std::equal(std::begin(magic), std::end(magic), std::begin(kFeatureMagic))) {
        throw Error(ErrorCode::FormatError, path.string() + ": bad magic");
    }
    if (const auto version = binio::read_u32(in); version != kFeatureVersion) {
        throw Error(ErrorCode::FormatError, "unsupported feature store version " + std::to_string(version));
    }
    FeatureStore store;
    const auto n_videos = binio::read_u32(in);
    for (std::uint32_t v = 0; v < n_videos; ++v) {
        std::string id = binio::read_string(in);
        const auto n_tokens = binio::read_u32(in);
        std::vector<TokenFeatures> tokens;
        tokens.reserve(std::min<std::uint32_t>(n_tokens, 1u << 16));
        for (std::uint32_t t = 0; t < n_tokens; ++t) {
            TokenFeatures tf;
            tf.visual = read_matrix(in);
            tf.audio = read_matrix(in);
            tokens.push_back(std::move(tf));
        }
        if (!store.emplace(std::move(id), std::move(tokens)).second) {
            throw Error(ErrorCode::FormatError, "duplicate video id in feature store");
        }
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw Error(ErrorCode::FormatError, path.string() + ": trailing bytes");
    }
    return store;
}

void save_features(const FeatureStore& store, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out.write(kFeatureMagic, sizeof kFeatureMagic);
    binio::write_u32(out, kFeatureVersion);
    binio::write_u32(out, static_cast<std::uint32_t>(store.size()));
    for (const auto& [id, tokens] : store) {
        binio::write_string(out, id);
        binio::write_u32(out, static_cast<std::uint32_t>(tokens.size()));
        for (const auto& tf : tokens) {
            write_matrix(out, tf.visual);
            write_matrix(out, tf.audio);
        }
    }
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

Dataset make_dataset(std::vector<VideoRecord> records, FeatureStore store) {
    Dataset ds{std::move(records), std::move(store)};
    ds.validate();
    return ds;
}

Dataset load_dataset(const std::filesystem::path& dir) {
    const auto manifest = dir / kManifestFile;
    const auto features = dir / kFeaturesFile;
    if (!std::filesystem::exists(manifest)) throw Error(ErrorCode::IoError, "missing " + manifest.string());
    if (!std::filesystem::exists(features)) throw Error(ErrorCode::IoError, "missing " + features.string());
    return make_dataset(load_manifest(manifest), load_features(features));
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    save_manifest(dataset.videos, dir / kManifestFile);
    save_features(dataset.features, dir / kFeaturesFile);
}

}  // namespace wafl
