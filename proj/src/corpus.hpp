#ifndef MEDUSA_CORPUS_HPP
#define MEDUSA_CORPUS_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "errors.hpp"

namespace medusa::corpus {

inline constexpr int kNumClasses = 8;

// Fixed category order; all 8-dim vectors in the project are indexed by it.
const std::array<std::string, kNumClasses>& category_names();
int category_index(const std::string& name);  // -1 if unknown

enum class Split { train, val, test };
std::string split_name(Split s);
Split split_from_name(const std::string& s);

struct VoteVector {
    std::array<int, kNumClasses> counts{};
    int extra_count = 0;  // votes outside the 8 categories

    int in_category_total() const;
};

struct SoftTarget {
    std::array<double, kNumClasses> probs{};
};

struct AttributeTriple {
    double arousal = 0.0;
    double valence = 0.0;
    double dominance = 0.0;

    double operator[](int i) const { return i == 0 ? arousal : (i == 1 ? valence : dominance); }
    double& operator[](int i) { return i == 0 ? arousal : (i == 1 ? valence : dominance); }
};

struct Utterance {
    std::string id;
    std::map<std::string, std::string> features;  // modality name -> path relative to corpus root
    VoteVector votes;
    SoftTarget target;
    AttributeTriple attributes;
    int hard_label = 0;  // argmax of target, lowest index on ties
    Split split = Split::train;
};

struct Exclusion {
    std::string id;
    std::string reason;
};

struct Corpus {
    std::filesystem::path root;            // directory feature paths are relative to
    std::vector<std::string> modalities;   // order from the manifest header
    std::vector<Utterance> utterances;
    std::vector<Exclusion> exclusions;
    std::unordered_map<std::string, size_t> by_id;

    const Utterance& get(const std::string& id) const;
    Utterance& get(const std::string& id);
    void rebuild_index();
};

// probs[i] = counts[i] / sum(counts); extra_count is dropped first.
// Throws ZeroVotesError when no in-category votes are present.
SoftTarget normalize_votes(const VoteVector& votes);

int hard_label_of(const SoftTarget& target);

// Manifest: tab-separated, one row per utterance, header names the columns.
Corpus load_manifest(const std::filesystem::path& path);
void write_manifest(const Corpus& corpus, const std::filesystem::path& path);
void write_exclusions(const Corpus& corpus, const std::filesystem::path& path);

// Checks every configured modality resolves to a readable feature file and that
// feature dims agree per modality. Returns modality -> feature dim.
std::map<std::string, int64_t> validate_features(const Corpus& corpus);

struct AttributeScaler {
    std::array<double, 3> mean{};
    std::array<double, 3> std{};  // 0 replaced by 1

    AttributeTriple standardize(const AttributeTriple& a) const;
    AttributeTriple unstandardize(const AttributeTriple& a) const;
};

// Scaler fitted on the train split (population std); applied to every split in place.
AttributeScaler standardize_attributes(Corpus& corpus);

// Feature file: "MDSF", version u16, L u32, F u32, then L*F little-endian f32 row-major.
struct FeatureSequence {
    int64_t length = 0;
    int64_t dim = 0;
    std::vector<float> values;  // row-major (length, dim)
};

void write_feature_file(const std::filesystem::path& path, const FeatureSequence& seq);
FeatureSequence read_feature_file(const std::filesystem::path& path);
// Header only (cheap validation).
std::pair<int64_t, int64_t> read_feature_header(const std::filesystem::path& path);

}  // namespace medusa::corpus

#endif
