#include "corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "binio.hpp"

namespace medusa::corpus {

namespace fs = std::filesystem;

const std::array<std::string, kNumClasses>& category_names() {
    static const std::array<std::string, kNumClasses> names = {
        "anger", "happiness", "sadness", "fear", "surprise", "contempt", "disgust", "neutral"};
    return names;
}

int category_index(const std::string& name) {
    const auto& names = category_names();
    for (int i = 0; i < kNumClasses; ++i)
        if (names[static_cast<size_t>(i)] == name) return i;
    return -1;
}

std::string split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "train";
}

Split split_from_name(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw ParseError("unknown split tag '" + s + "'");
}

int VoteVector::in_category_total() const {
    int total = 0;
    for (int c : counts) total += c;
    return total;
}

SoftTarget normalize_votes(const VoteVector& votes) {
    for (int c : votes.counts)
        if (c < 0) throw ParseError("negative vote count");
    int total = votes.in_category_total();
    if (total == 0) throw ZeroVotesError("no in-category votes");
    SoftTarget t;
    for (int i = 0; i < kNumClasses; ++i)
        t.probs[static_cast<size_t>(i)] =
            static_cast<double>(votes.counts[static_cast<size_t>(i)]) / static_cast<double>(total);
    return t;
}

int hard_label_of(const SoftTarget& target) {
    int best = 0;
    for (int i = 1; i < kNumClasses; ++i)
        if (target.probs[static_cast<size_t>(i)] > target.probs[static_cast<size_t>(best)]) best = i;
    return best;
}

const Utterance& Corpus::get(const std::string& id) const {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw UnknownIdError("unknown utterance id '" + id + "'");
    return utterances[it->second];
}

Utterance& Corpus::get(const std::string& id) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw UnknownIdError("unknown utterance id '" + id + "'");
    return utterances[it->second];
}

void Corpus::rebuild_index() {
    by_id.clear();
    for (size_t i = 0; i < utterances.size(); ++i) by_id[utterances[i].id] = i;
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        size_t pos = line.find('\t', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

int parse_int(const std::string& s, int line_no, const std::string& field) {
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw ParseError("line " + std::to_string(line_no) + ": field '" + field + "' is not an integer: '" + s + "'");
    return v;
}

double parse_double(const std::string& s, int line_no, const std::string& field) {
    double v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw ParseError("line " + std::to_string(line_no) + ": field '" + field + "' is not a number: '" + s + "'");
    return v;
}

std::string format_double(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, p);
}

const std::array<std::string, 3> kAttrNames = {"arousal", "valence", "dominance"};

}  // namespace

Corpus load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest: " + path.string());

    Corpus corpus;
    corpus.root = path.has_parent_path() ? path.parent_path() : fs::path(".");

    std::string header;
    if (!std::getline(in, header)) throw ParseError("empty manifest: " + path.string());
    if (!header.empty() && header.back() == '\r') header.pop_back();
    std::vector<std::string> cols = split_tabs(header);

    // Resolve column positions; feature columns are "feat:<modality>".
    std::unordered_map<std::string, size_t> col_of;
    for (size_t i = 0; i < cols.size(); ++i) col_of[cols[i]] = i;

    auto need = [&](const std::string& name) -> size_t {
        auto it = col_of.find(name);
        if (it == col_of.end()) throw MissingFieldError("manifest missing column '" + name + "'");
        return it->second;
    };

    size_t id_col = need("id");
    size_t split_col = need("split");
    std::array<size_t, kNumClasses> vote_cols{};
    for (int c = 0; c < kNumClasses; ++c)
        vote_cols[static_cast<size_t>(c)] = need("vote_" + category_names()[static_cast<size_t>(c)]);
    size_t extra_col = need("vote_other");
    std::array<size_t, 3> attr_cols = {need("arousal"), need("valence"), need("dominance")};

    std::vector<std::pair<std::string, size_t>> feat_cols;
    for (size_t i = 0; i < cols.size(); ++i)
        if (cols[i].rfind("feat:", 0) == 0) feat_cols.emplace_back(cols[i].substr(5), i);
    if (feat_cols.empty()) throw MissingFieldError("manifest has no 'feat:<modality>' columns");
    for (const auto& [m, _] : feat_cols) corpus.modalities.push_back(m);

    std::string line;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> f = split_tabs(line);
        if (f.size() != cols.size())
            throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(cols.size()) +
                             " fields, got " + std::to_string(f.size()));

        Utterance u;
        u.id = f[id_col];
        if (u.id.empty()) throw ParseError("line " + std::to_string(line_no) + ": empty id");
        u.split = split_from_name(f[split_col]);
        for (int c = 0; c < kNumClasses; ++c)
            u.votes.counts[static_cast<size_t>(c)] =
                parse_int(f[vote_cols[static_cast<size_t>(c)]], line_no, "vote_" + category_names()[static_cast<size_t>(c)]);
        u.votes.extra_count = parse_int(f[extra_col], line_no, "vote_other");
        for (int a = 0; a < 3; ++a) {
            double v = parse_double(f[attr_cols[static_cast<size_t>(a)]], line_no, kAttrNames[static_cast<size_t>(a)]);
            if (v < 1.0 || v > 7.0)
                throw ParseError("line " + std::to_string(line_no) + ": " + kAttrNames[static_cast<size_t>(a)] +
                                 " outside [1,7]: " + f[attr_cols[static_cast<size_t>(a)]]);
            u.attributes[a] = v;
        }
        for (const auto& [m, col] : feat_cols) {
            if (f[col].empty())
                throw MissingFieldError("line " + std::to_string(line_no) + ": empty feature path for modality '" + m + "'");
            u.features[m] = f[col];
        }

        try {
            u.target = normalize_votes(u.votes);
        } catch (const ZeroVotesError&) {
            corpus.exclusions.push_back({u.id, "no in-category votes"});
            continue;
        }
        u.hard_label = hard_label_of(u.target);
        corpus.utterances.push_back(std::move(u));
    }
    corpus.rebuild_index();
    return corpus;
}

void write_manifest(const Corpus& corpus, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);  // binary: stable newlines
    if (!out) throw IoError("cannot write manifest: " + path.string());

    out << "id\tsplit";
    for (const auto& name : category_names()) out << "\tvote_" << name;
    out << "\tvote_other\tarousal\tvalence\tdominance";
    for (const auto& m : corpus.modalities) out << "\tfeat:" << m;
    out << "\n";

    for (const Utterance& u : corpus.utterances) {
        out << u.id << "\t" << split_name(u.split);
        for (int c : u.votes.counts) out << "\t" << c;
        out << "\t" << u.votes.extra_count;
        for (int a = 0; a < 3; ++a) out << "\t" << format_double(u.attributes[a]);
        for (const auto& m : corpus.modalities) {
            auto it = u.features.find(m);
            if (it == u.features.end())
                throw MissingFieldError("utterance '" + u.id + "' lacks feature path for modality '" + m + "'");
            out << "\t" << it->second;
        }
        out << "\n";
    }
    if (!out) throw IoError("write failed: " + path.string());
}

void write_exclusions(const Corpus& corpus, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write exclusion report: " + path.string());
    for (const Exclusion& e : corpus.exclusions) out << e.id << "\t" << e.reason << "\n";
}

std::map<std::string, int64_t> validate_features(const Corpus& corpus) {
    std::map<std::string, int64_t> dims;
    for (const Utterance& u : corpus.utterances) {
        for (const auto& m : corpus.modalities) {
            auto it = u.features.find(m);
            if (it == u.features.end())
                throw ModalityMissingError("utterance '" + u.id + "' has no feature reference for modality '" + m + "'");
            fs::path p = corpus.root / it->second;
            if (!fs::exists(p))
                throw IoError("utterance '" + u.id + "': feature file missing: " + p.string());
            auto [len, dim] = read_feature_header(p);
            if (len < 1)
                throw ShapeMismatchError("utterance '" + u.id + "': feature file has zero length: " + p.string());
            auto [pos, inserted] = dims.try_emplace(m, dim);
            if (!inserted && pos->second != dim)
                throw ShapeMismatchError("utterance '" + u.id + "': modality '" + m + "' dim " + std::to_string(dim) +
                                         " != corpus dim " + std::to_string(pos->second));
        }
    }
    return dims;
}

AttributeTriple AttributeScaler::standardize(const AttributeTriple& a) const {
    AttributeTriple out;
    for (int i = 0; i < 3; ++i) out[i] = (a[i] - mean[static_cast<size_t>(i)]) / std[static_cast<size_t>(i)];
    return out;
}

AttributeTriple AttributeScaler::unstandardize(const AttributeTriple& a) const {
    AttributeTriple out;
    for (int i = 0; i < 3; ++i) out[i] = a[i] * std[static_cast<size_t>(i)] + mean[static_cast<size_t>(i)];
    return out;
}

AttributeScaler standardize_attributes(Corpus& corpus) {
    AttributeScaler scaler;
    std::array<double, 3> sum{}, sumsq{};
    int64_t n = 0;
    for (const Utterance& u : corpus.utterances) {
        if (u.split != Split::train) continue;
        ++n;
        for (int i = 0; i < 3; ++i) {
            sum[static_cast<size_t>(i)] += u.attributes[i];
            sumsq[static_cast<size_t>(i)] += u.attributes[i] * u.attributes[i];
        }
    }
    if (n == 0) throw EmptyCorpusError("standardize_attributes: train split is empty");
    for (int i = 0; i < 3; ++i) {
        double mu = sum[static_cast<size_t>(i)] / static_cast<double>(n);
        double var = sumsq[static_cast<size_t>(i)] / static_cast<double>(n) - mu * mu;
        double sd = var > 0.0 ? std::sqrt(var) : 0.0;
        scaler.mean[static_cast<size_t>(i)] = mu;
        scaler.std[static_cast<size_t>(i)] = sd > 0.0 ? sd : 1.0;
    }
    for (Utterance& u : corpus.utterances) u.attributes = scaler.standardize(u.attributes);
    return scaler;
}

void write_feature_file(const fs::path& path, const FeatureSequence& seq) {
    if (seq.length < 1 || seq.dim < 1) throw ShapeMismatchError("feature sequence must be at least 1x1");
    if (static_cast<int64_t>(seq.values.size()) != seq.length * seq.dim)
        throw ShapeMismatchError("feature sequence data size mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write feature file: " + path.string());
    out.write("MDSF", 4);
    binio::put_u16(out, 1);
    binio::put_u32(out, static_cast<uint32_t>(seq.length));
    binio::put_u32(out, static_cast<uint32_t>(seq.dim));
    binio::put_f32_array(out, seq.values.data(), seq.values.size());
    if (!out) throw IoError("write failed: " + path.string());
}

FeatureSequence read_feature_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open feature file: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "MDSF") throw ParseError("bad feature file magic: " + path.string());
    uint16_t version = binio::get_u16(in);
    if (version != 1) throw ParseError("unsupported feature file version " + std::to_string(version));
    FeatureSequence seq;
    seq.length = binio::get_u32(in);
    seq.dim = binio::get_u32(in);
    if (seq.length < 1 || seq.dim < 1) throw ParseError("degenerate feature file shape: " + path.string());
    seq.values.resize(static_cast<size_t>(seq.length * seq.dim));
    binio::get_f32_array(in, seq.values.data(), seq.values.size());
    for (float v : seq.values)
        if (!std::isfinite(v)) throw ParseError("non-finite feature value in " + path.string());
    return seq;
}

std::pair<int64_t, int64_t> read_feature_header(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open feature file: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "MDSF") throw ParseError("bad feature file magic: " + path.string());
    uint16_t version = binio::get_u16(in);
    if (version != 1) throw ParseError("unsupported feature file version " + std::to_string(version));
    int64_t len = binio::get_u32(in);
    int64_t dim = binio::get_u32(in);
    return {len, dim};
}

}  // namespace medusa::corpus
