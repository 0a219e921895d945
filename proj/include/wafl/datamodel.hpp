#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "wafl/matrix.hpp"

namespace wafl {

enum class Label : std::uint8_t { Real, Fake };
enum class Modality : std::uint8_t { Visual, Audio, Both };
enum class PadStrategy : std::uint8_t { Reflection, Trailing };

struct WordToken {
    std::string word;
    double t_s = 0.0;
    double t_e = 0.0;
    Label label_v = Label::Real;
    Label label_a = Label::Real;

    /// Fused label: fake if either modality is fake.
    Label label_av() const noexcept {
        return (label_v == Label::Fake || label_a == Label::Fake) ? Label::Fake : Label::Real;
    }

    friend bool operator==(const WordToken&, const WordToken&) = default;
};

struct ForgerySegment {
    double t_s = 0.0;
    double t_e = 0.0;
    Modality modality = Modality::Both;

    friend bool operator==(const ForgerySegment&, const ForgerySegment&) = default;
};

struct VideoRecord {
    std::string id;
    double duration = 0.0;
    std::vector<WordToken> tokens;
    std::vector<ForgerySegment> gt_segments;

    friend bool operator==(const VideoRecord&, const VideoRecord&) = default;
};

struct TokenFeatures {
    FeatureMatrix visual;  // T_v x k_v
    FeatureMatrix audio;   // T_a x k_a

    friend bool operator==(const TokenFeatures&, const TokenFeatures&) = default;
};

struct PadConfig {
    std::size_t target_T_v = 16;
    std::size_t target_T_a = 32;
    PadStrategy strategy_v = PadStrategy::Reflection;
    PadStrategy strategy_a = PadStrategy::Trailing;

    void validate() const;

    friend bool operator==(const PadConfig&, const PadConfig&) = default;
};

using FeatureStore = std::map<std::string, std::vector<TokenFeatures>>;

struct Dataset {
    std::vector<VideoRecord> videos;
    FeatureStore features;

    /// Checks that every token has exactly one feature entry and dims are constant.
    void validate() const;

    std::size_t token_count() const noexcept;
    std::size_t k_v() const;
    std::size_t k_a() const;

    const TokenFeatures& token_features(std::size_t video, std::size_t token) const;
};

using TranscriptEntry = std::tuple<std::string, double, double>;

std::vector<WordToken> segment_words(const std::vector<TranscriptEntry>& transcript, double duration);

std::vector<WordToken> label_tokens(std::vector<WordToken> tokens,
                                    const std::vector<ForgerySegment>& gt_segments);

template <typename T>
Matrix<T> pad_sequence(const Matrix<T>& seq, std::size_t target_T, PadStrategy strategy);

/// Pads both modalities of one token to the configured lengths.
TokenFeatures pad_token(const TokenFeatures& raw, const PadConfig& cfg);

/// Splits off the first `count` videos (and their features) from the rest.
std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset, std::size_t count);

std::string_view to_string(Label label) noexcept;
std::string_view to_string(Modality modality) noexcept;
std::string_view to_string(PadStrategy strategy) noexcept;
Label parse_label(std::string_view text);
Modality parse_modality(std::string_view text);
PadStrategy parse_pad_strategy(std::string_view text);

// On-disk formats.

std::vector<VideoRecord> load_manifest(const std::filesystem::path& path);
void save_manifest(const std::vector<VideoRecord>& records, const std::filesystem::path& path);

FeatureStore load_features(const std::filesystem::path& path);
void save_features(const FeatureStore& store, const std::filesystem::path& path);

/// Pairs a manifest with its feature store, raising MissingFeatures or DimensionMismatch.
Dataset make_dataset(std::vector<VideoRecord> records, FeatureStore store);

inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kFeaturesFile = "features.bin";

/// Loads `<dir>/manifest.json` and `<dir>/features.bin`.
Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

}  // namespace wafl
