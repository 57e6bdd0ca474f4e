#pragma once

// Record and annotation file formats, CSV import, and the synthetic PQRST generator.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"

#include "ecgcode/error.hpp"

namespace ecgcode {

namespace fs = std::filesystem;
using json = nlohmann::json;

enum class WaveClass : int { P = 0, QRS = 1, T = 2 };

inline constexpr std::array<WaveClass, 3> kWaveClasses = {WaveClass::P, WaveClass::QRS, WaveClass::T};
inline constexpr int kNumClasses = 3;

inline std::string_view to_string(WaveClass c) {
    switch (c) {
    case WaveClass::P: return "P";
    case WaveClass::QRS: return "QRS";
    case WaveClass::T: return "T";
    }
    return "?";
}

inline WaveClass parse_wave_class(std::string_view s) {
    if (s == "P") return WaveClass::P;
    if (s == "QRS") return WaveClass::QRS;
    if (s == "T") return WaveClass::T;
    throw ValidationError("unknown wave class '" + std::string(s) + "'");
}

inline int class_index(WaveClass c) { return static_cast<int>(c); }

/// Half-open sample interval [onset, offset) tagged with a wave class.
struct Segment {
    WaveClass wave_class = WaveClass::P;
    std::int64_t onset = 0;
    std::int64_t offset = 0;
    std::optional<double> confidence;

    std::int64_t length() const { return offset - onset; }
    bool operator==(const Segment&) const = default;
};

/// Same class and bounds; ignores confidence.
inline bool same_extent(const Segment& a, const Segment& b) {
    return a.wave_class == b.wave_class && a.onset == b.onset && a.offset == b.offset;
}

inline bool segment_order(const Segment& a, const Segment& b) {
    if (a.onset != b.onset) return a.onset < b.onset;
    return class_index(a.wave_class) < class_index(b.wave_class);
}

inline void validate_segment(const Segment& s, std::optional<std::int64_t> n_samples = std::nullopt) {
    if (s.onset < 0) throw ValidationError("segment onset < 0");
    if (s.offset <= s.onset)
        throw ValidationError("segment offset " + std::to_string(s.offset) + " <= onset " + std::to_string(s.onset));
    if (n_samples && s.offset > *n_samples)
        throw ValidationError("segment offset " + std::to_string(s.offset) + " exceeds record length " +
                              std::to_string(*n_samples));
    if (s.confidence) {
        double c = *s.confidence;
        if (!std::isfinite(c) || c <= 0.0 || c >= 1.0)
            throw ValidationError("segment confidence must lie in (0,1)");
    }
}

struct AnnotationSet {
    std::string record_id;
    std::vector<Segment> segments;

    /// Sort by onset (ties P < QRS < T) and check every invariant.
    void normalize(std::optional<std::int64_t> n_samples = std::nullopt) {
        std::stable_sort(segments.begin(), segments.end(), segment_order);
        validate(n_samples);
    }

    void validate(std::optional<std::int64_t> n_samples = std::nullopt) const {
        for (const auto& s : segments) validate_segment(s, n_samples);
        if (!std::is_sorted(segments.begin(), segments.end(), segment_order))
            throw ValidationError("segments not sorted by onset");
        std::array<std::int64_t, kNumClasses> last_offset;
        last_offset.fill(std::numeric_limits<std::int64_t>::min());
        for (const auto& s : segments) {
            auto& prev = last_offset[class_index(s.wave_class)];
            if (s.onset < prev)
                throw ValidationError("overlapping " + std::string(to_string(s.wave_class)) + " segments at sample " +
                                      std::to_string(s.onset));
            prev = s.offset;
        }
    }

    std::vector<Segment> of_class(WaveClass c) const {
        std::vector<Segment> out;
        for (const auto& s : segments)
            if (s.wave_class == c) out.push_back(s);
        return out;
    }

    bool operator==(const AnnotationSet&) const = default;
};

// ---------------------------------------------------------------------------
// EcgRecord

class EcgRecord {
public:
    EcgRecord() = default;

    /// `samples` is lead-major: lead 0's N values, then lead 1's, ...
    EcgRecord(std::string id, int sampling_rate_hz, std::vector<std::string> leads, std::vector<float> samples,
              json meta = json::object())
        : id_(std::move(id)), rate_(sampling_rate_hz), leads_(std::move(leads)), samples_(std::move(samples)),
          meta_(std::move(meta)) {
        if (rate_ <= 0) throw ValidationError("sampling rate must be positive");
        if (leads_.empty()) throw ValidationError("record needs at least one lead");
        std::unordered_set<std::string> seen;
        for (const auto& l : leads_)
            if (!seen.insert(l).second) throw ValidationError("duplicate lead name '" + l + "'");
        if (samples_.empty() || samples_.size() % leads_.size() != 0)
            throw ValidationError("sample count not a positive multiple of lead count");
        for (float v : samples_)
            if (!std::isfinite(v)) throw ValidationError("non-finite sample value in record '" + id_ + "'");
        if (!meta_.is_object()) throw ValidationError("record meta must be a JSON object");
    }

    const std::string& id() const { return id_; }
    int sampling_rate_hz() const { return rate_; }
    const std::vector<std::string>& leads() const { return leads_; }
    std::size_t n_leads() const { return leads_.size(); }
    std::size_t n_samples() const { return leads_.empty() ? 0 : samples_.size() / leads_.size(); }
    double duration_ms() const { return 1000.0 * static_cast<double>(n_samples()) / rate_; }
    const json& meta() const { return meta_; }
    const std::vector<float>& samples() const { return samples_; }

    std::span<const float> lead(std::size_t i) const {
        return std::span<const float>(samples_).subspan(i * n_samples(), n_samples());
    }

    std::vector<double> lead_as_double(std::size_t i) const {
        auto l = lead(i);
        return std::vector<double>(l.begin(), l.end());
    }

    bool operator==(const EcgRecord& o) const {
        if (id_ != o.id_ || rate_ != o.rate_ || leads_ != o.leads_ || meta_ != o.meta_) return false;
        if (samples_.size() != o.samples_.size()) return false;
        return std::memcmp(samples_.data(), o.samples_.data(), samples_.size() * sizeof(float)) == 0;
    }

private:
    std::string id_;
    int rate_ = 0;
    std::vector<std::string> leads_;
    std::vector<float> samples_;
    json meta_ = json::object();
};

/// Build a record from per-lead double vectors (float32 storage).
inline EcgRecord make_record(std::string id, int rate, std::vector<std::string> leads,
                             const std::vector<std::vector<double>>& lead_samples, json meta = json::object()) {
    if (lead_samples.size() != leads.size()) throw ValidationError("lead count mismatch");
    std::vector<float> flat;
    std::size_t n = lead_samples.empty() ? 0 : lead_samples.front().size();
    flat.reserve(n * lead_samples.size());
    for (const auto& l : lead_samples) {
        if (l.size() != n) throw ValidationError("leads differ in length");
        for (double v : l) flat.push_back(static_cast<float>(v));
    }
    return EcgRecord(std::move(id), rate, std::move(leads), std::move(flat), std::move(meta));
}

inline std::vector<std::string> default_lead_names(std::size_t n) {
    static const std::array<const char*, 12> standard = {"I",  "II", "III", "aVR", "aVL", "aVF",
                                                         "V1", "V2", "V3",  "V4",  "V5",  "V6"};
    std::vector<std::string> names;
    for (std::size_t i = 0; i < n; ++i)
        names.emplace_back(n <= standard.size() ? standard[i] : "lead" + std::to_string(i));
    return names;
}

namespace detail {

inline std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open '" + p.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline json parse_json_file(const fs::path& p) {
    std::string text = read_text(p);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError("malformed JSON in '" + p.string() + "': " + e.what());
    }
}

/// Write to a sibling temp file and rename into place.
inline void write_atomic(const fs::path& p, std::string_view bytes) {
    fs::path tmp = p;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write '" + p.string() + "'");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw IoError("short write to '" + p.string() + "'");
        }
    }
    std::error_code ec;
    fs::rename(tmp, p, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot rename into '" + p.string() + "'");
    }
}

inline std::uint32_t to_le(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::little) return v;
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

inline std::string encode_f32_le(std::span<const float> values) {
    std::string bytes(values.size() * 4, '\0');
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint32_t bits = to_le(std::bit_cast<std::uint32_t>(values[i]));
        std::memcpy(bytes.data() + 4 * i, &bits, 4);
    }
    return bytes;
}

inline std::vector<float> decode_f32_le(std::string_view bytes) {
    std::vector<float> out(bytes.size() / 4);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, bytes.data() + 4 * i, 4);
        out[i] = std::bit_cast<float>(to_le(bits));
    }
    return out;
}

template <class T>
T require(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw ValidationError(where + ": missing key '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ValidationError(where + ": bad value for '" + key + "': " + e.what());
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Record directory: header.json + signal.bin (float32 LE, lead-major)

inline EcgRecord read_record(const fs::path& dir) {
    const fs::path header_path = dir / "header.json";
    const fs::path signal_path = dir / "signal.bin";
    if (!fs::exists(header_path)) throw IoError("missing header '" + header_path.string() + "'");
    if (!fs::exists(signal_path)) throw IoError("missing signal '" + signal_path.string() + "'");

    json h = detail::parse_json_file(header_path);
    const std::string where = header_path.string();
    if (!h.is_object()) throw ValidationError(where + ": header must be an object");
    auto id = detail::require<std::string>(h, "id", where);
    auto rate = detail::require<std::int64_t>(h, "sampling_rate_hz", where);
    auto n = detail::require<std::int64_t>(h, "n_samples", where);
    auto leads = detail::require<std::vector<std::string>>(h, "leads", where);
    json meta = h.contains("meta") ? h.at("meta") : json::object();
    if (rate <= 0 || rate > std::numeric_limits<int>::max()) throw ValidationError(where + ": bad sampling rate");
    if (n < 1) throw ValidationError(where + ": n_samples must be >= 1");

    std::string bytes = detail::read_text(signal_path);
    const auto expected = static_cast<std::uint64_t>(n) * leads.size() * 4;
    if (bytes.size() != expected)
        throw ValidationError("length mismatch: header declares " + std::to_string(n) + " samples x " +
                              std::to_string(leads.size()) + " leads but signal holds " +
                              std::to_string(bytes.size()) + " bytes");
    return EcgRecord(std::move(id), static_cast<int>(rate), std::move(leads), detail::decode_f32_le(bytes),
                     std::move(meta));
}

inline void write_record(const EcgRecord& record, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create record directory '" + dir.string() + "'");
    json h = {{"id", record.id()},
              {"sampling_rate_hz", record.sampling_rate_hz()},
              {"n_samples", record.n_samples()},
              {"leads", record.leads()},
              {"meta", record.meta()}};
    // Signal first so a failure never leaves a header pointing at nothing.
    detail::write_atomic(dir / "signal.bin", detail::encode_f32_le(record.samples()));
    try {
        detail::write_atomic(dir / "header.json", h.dump(2) + "\n");
    } catch (...) {
        fs::remove(dir / "signal.bin", ec);
        throw;
    }
}

// ---------------------------------------------------------------------------
// Annotations: <record_id>.delin.json

inline json annotations_to_json(const AnnotationSet& set) {
    json segs = json::array();
    for (const auto& s : set.segments) {
        json js = {{"class", to_string(s.wave_class)}, {"onset", s.onset}, {"offset", s.offset}};
        js["confidence"] = s.confidence ? json(*s.confidence) : json(nullptr);
        segs.push_back(std::move(js));
    }
    return json{{"record_id", set.record_id}, {"segments", std::move(segs)}};
}

inline AnnotationSet annotations_from_json(const json& j, const std::string& where = "annotations") {
    if (!j.is_object()) throw ValidationError(where + ": expected object");
    AnnotationSet set;
    set.record_id = detail::require<std::string>(j, "record_id", where);
    if (!j.contains("segments") || !j.at("segments").is_array())
        throw ValidationError(where + ": 'segments' must be an array");
    for (const auto& js : j.at("segments")) {
        Segment s;
        s.wave_class = parse_wave_class(detail::require<std::string>(js, "class", where));
        s.onset = detail::require<std::int64_t>(js, "onset", where);
        s.offset = detail::require<std::int64_t>(js, "offset", where);
        if (js.contains("confidence") && !js.at("confidence").is_null())
            s.confidence = detail::require<double>(js, "confidence", where);
        set.segments.push_back(s);
    }
    set.normalize();
    return set;
}

inline AnnotationSet read_annotations(const fs::path& path) {
    if (!fs::exists(path)) throw IoError("missing annotation file '" + path.string() + "'");
    return annotations_from_json(detail::parse_json_file(path), path.string());
}

inline void write_annotations(const AnnotationSet& set, const fs::path& path) {
    AnnotationSet sorted = set;
    sorted.normalize();
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    detail::write_atomic(path, annotations_to_json(sorted).dump(2) + "\n");
}

inline fs::path annotation_path(const fs::path& dir, const std::string& record_id, std::string_view tag = "") {
    std::string name = record_id;
    if (!tag.empty()) name += "." + std::string(tag);
    return dir / (name + ".delin.json");
}

/// Record directories (those holding header.json) directly under `dir`, sorted by name.
inline std::vector<fs::path> list_record_dirs(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: '" + dir.string() + "'");
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory() && fs::exists(e.path() / "header.json")) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// CSV import: header row, first column time (seconds) or sample index, one column per lead.

inline EcgRecord import_csv(const fs::path& path, std::string id, std::optional<int> sampling_rate_hz = std::nullopt) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    auto split = [](const std::string& line) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
            while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
            cells.push_back(cell);
        }
        return cells;
    };
    std::string line;
    if (!std::getline(in, line)) throw ValidationError(path.string() + ": empty CSV");
    auto header = split(line);
    if (header.size() < 2) throw ValidationError(path.string() + ": need a time/index column and at least one lead");
    std::vector<std::string> leads(header.begin() + 1, header.end());
    std::vector<std::vector<double>> cols(leads.size());
    std::vector<double> first;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        auto cells = split(line);
        if (cells.size() != header.size())
            throw ValidationError(path.string() + ": row " + std::to_string(row) + " has wrong column count");
        try {
            first.push_back(std::stod(cells[0]));
            for (std::size_t i = 0; i < leads.size(); ++i) cols[i].push_back(std::stod(cells[i + 1]));
        } catch (const std::exception&) {
            throw ValidationError(path.string() + ": non-numeric value at row " + std::to_string(row));
        }
    }
    if (first.empty()) throw ValidationError(path.string() + ": no data rows");
    int rate = 0;
    if (sampling_rate_hz) {
        rate = *sampling_rate_hz;
    } else {
        std::string h0 = header[0];
        std::transform(h0.begin(), h0.end(), h0.begin(), [](unsigned char c) { return std::tolower(c); });
        if (h0.rfind("time", 0) != 0 && h0 != "t")
            throw ValidationError(path.string() + ": sampling rate required when first column is an index");
        if (first.size() < 2) throw ValidationError(path.string() + ": cannot infer rate from one row");
        double dt = (first.back() - first.front()) / static_cast<double>(first.size() - 1);
        if (!(dt > 0)) throw ValidationError(path.string() + ": time column not increasing");
        rate = static_cast<int>(std::lround(1.0 / dt));
    }
    return make_record(std::move(id), rate, std::move(leads), cols);
}

// ---------------------------------------------------------------------------
// Synthetic PQRST generator

struct WaveShape {
    double amplitude_mv;
    double width_ms;
};

struct SynthSpec {
    double duration_s = 10.0;
    int sampling_rate_hz = 1000;
    double heart_rate_bpm = 60.0;
    WaveShape p{0.15, 100.0};
    WaveShape qrs{1.0, 100.0};
    WaveShape t{0.3, 200.0};
    double pr_gap_ms = 50.0;  ///< P offset to QRS onset
    double st_gap_ms = 100.0; ///< QRS offset to T onset
    double start_ms = 50.0;   ///< first P onset
    double noise_mv = 0.0;
    std::size_t n_leads = 12;
    std::uint64_t seed = 0;
    std::string id = "synth";

    void validate() const {
        auto pos = [](double v, const char* what) {
            if (!(v > 0) || !std::isfinite(v)) throw ValidationError(std::string("synth: ") + what + " must be positive");
        };
        pos(duration_s, "duration_s");
        pos(sampling_rate_hz, "sampling_rate_hz");
        pos(heart_rate_bpm, "heart_rate_bpm");
        pos(p.amplitude_mv, "p amplitude");
        pos(p.width_ms, "p width");
        pos(qrs.amplitude_mv, "qrs amplitude");
        pos(qrs.width_ms, "qrs width");
        pos(t.amplitude_mv, "t amplitude");
        pos(t.width_ms, "t width");
        pos(pr_gap_ms, "pr_gap_ms");
        pos(st_gap_ms, "st_gap_ms");
        if (start_ms < 0) throw ValidationError("synth: start_ms must be >= 0");
        if (!(noise_mv >= 0)) throw ValidationError("synth: noise amplitude must be >= 0");
        if (n_leads < 1) throw ValidationError("synth: need at least one lead");
    }
};

inline constexpr std::int64_t kSynthMinGapSamples = 300;
inline constexpr std::int64_t kSynthMinLenSamples = 50;

namespace detail {

inline double lead_gain(std::size_t lead) {
    static constexpr std::array<double, 12> gains = {1.0, 0.8, -0.4, -0.9, 0.6, 0.5, -0.3, 0.4, 0.9, 1.2, 1.1, 0.9};
    return gains[lead % gains.size()];
}

/// Gaussian bump on [0,w), shifted so it vanishes exactly at both ends.
inline double bump(double t, double w) {
    if (t < 0 || t >= w) return 0.0;
    const double sigma = w / 5.0;
    const double c = w / 2.0;
    const double floor = std::exp(-(c * c) / (2 * sigma * sigma));
    const double g = std::exp(-((t - c) * (t - c)) / (2 * sigma * sigma));
    return (g - floor) / (1.0 - floor);
}

/// Biphasic triangular QRS on [0,w): Q dip, R peak at w/2, S dip.
inline double qrs_spike(double t, double w) {
    if (t < 0 || t >= w) return 0.0;
    static constexpr std::array<double, 5> xs = {0.0, 0.2, 0.5, 0.75, 1.0};
    static constexpr std::array<double, 5> ys = {0.0, -0.15, 1.0, -0.3, 0.0};
    double u = t / w;
    for (std::size_t k = 0; k + 1 < xs.size(); ++k) {
        if (u <= xs[k + 1]) {
            double a = (u - xs[k]) / (xs[k + 1] - xs[k]);
            return ys[k] + a * (ys[k + 1] - ys[k]);
        }
    }
    return 0.0;
}

} // namespace detail

/// Deterministic synthetic record with exact ground-truth segments.
inline std::pair<EcgRecord, AnnotationSet> synth_record(const SynthSpec& spec) {
    spec.validate();
    const double fs_per_ms = spec.sampling_rate_hz / 1000.0;
    const auto n = static_cast<std::int64_t>(std::llround(spec.duration_s * spec.sampling_rate_hz));
    auto to_samples = [&](double ms) { return static_cast<std::int64_t>(std::llround(ms * fs_per_ms)); };

    const std::int64_t pw = to_samples(spec.p.width_ms), qw = to_samples(spec.qrs.width_ms),
                       tw = to_samples(spec.t.width_ms);
    const std::int64_t pr = to_samples(spec.pr_gap_ms), st = to_samples(spec.st_gap_ms);
    const double rr_ms = 60000.0 / spec.heart_rate_bpm;
    const std::int64_t beat_span = pw + pr + qw + st + tw;
    const std::int64_t rr = to_samples(rr_ms);
    if (std::min({pw, qw, tw}) < kSynthMinLenSamples)
        throw ValidationError("synth: wave widths must be >= " + std::to_string(kSynthMinLenSamples) + " samples");
    if (rr - std::max({pw, qw, tw}) <= kSynthMinGapSamples || rr <= beat_span)
        throw ValidationError("synth: heart rate too high for gap constraint at this sampling rate");

    AnnotationSet ann;
    ann.record_id = spec.id;
    std::vector<std::int64_t> beat_starts;
    for (std::int64_t k = 0;; ++k) {
        const std::int64_t b = to_samples(spec.start_ms + k * rr_ms);
        if (b + beat_span > n) break;
        beat_starts.push_back(b);
        const std::int64_t q = b + pw + pr;
        const std::int64_t t = q + qw + st;
        ann.segments.push_back({WaveClass::P, b, b + pw, std::nullopt});
        ann.segments.push_back({WaveClass::QRS, q, q + qw, std::nullopt});
        ann.segments.push_back({WaveClass::T, t, t + tw, std::nullopt});
    }
    ann.normalize(n);

    std::vector<double> base(static_cast<std::size_t>(n), 0.0);
    for (const auto& s : ann.segments) {
        const double w = static_cast<double>(s.length());
        for (std::int64_t i = s.onset; i < s.offset; ++i) {
            const double t = static_cast<double>(i - s.onset);
            double v = 0;
            switch (s.wave_class) {
            case WaveClass::P: v = spec.p.amplitude_mv * detail::bump(t, w); break;
            case WaveClass::QRS: v = spec.qrs.amplitude_mv * detail::qrs_spike(t, w); break;
            case WaveClass::T: v = spec.t.amplitude_mv * detail::bump(t, w); break;
            }
            base[static_cast<std::size_t>(i)] += v;
        }
    }

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<std::vector<double>> leads(spec.n_leads, std::vector<double>(base.size()));
    for (std::size_t l = 0; l < spec.n_leads; ++l) {
        const double g = detail::lead_gain(l);
        for (std::size_t i = 0; i < base.size(); ++i) {
            leads[l][i] = g * base[i];
            if (spec.noise_mv > 0) leads[l][i] += spec.noise_mv * noise(rng);
        }
    }
    json meta = {{"synthetic", true}, {"heart_rate_bpm", spec.heart_rate_bpm}, {"seed", spec.seed}};
    return {make_record(spec.id, spec.sampling_rate_hz, default_lead_names(spec.n_leads), leads, std::move(meta)),
            std::move(ann)};
}

/// Record id used by corpus generators: prefix + zero-padded index.
inline std::string corpus_record_id(const std::string& prefix, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04zu", i);
    return prefix + buf;
}

/// A corpus of `n` records with per-record rhythm and morphology drawn from `seed`.
inline std::vector<std::pair<EcgRecord, AnnotationSet>> synth_corpus(std::size_t n, std::uint64_t seed,
                                                                     const std::string& prefix = "rec_",
                                                                     double noise_mv = 0.02, std::size_t n_leads = 12) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto draw = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
    std::vector<std::pair<EcgRecord, AnnotationSet>> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        SynthSpec s;
        s.id = corpus_record_id(prefix, i);
        s.heart_rate_bpm = draw(55.0, 85.0);
        s.p = {draw(0.10, 0.25), draw(80.0, 120.0)};
        s.qrs = {draw(0.8, 1.6), draw(70.0, 110.0)};
        s.t = {draw(0.2, 0.45), draw(150.0, 250.0)};
        s.pr_gap_ms = draw(40.0, 80.0);
        s.st_gap_ms = draw(80.0, 140.0);
        s.start_ms = draw(20.0, 400.0);
        s.noise_mv = noise_mv;
        s.n_leads = n_leads;
        s.seed = rng();
        out.push_back(synth_record(s));
    }
    return out;
}

} // namespace ecgcode
