#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "kmfg/common.hpp"

namespace kmfg {

// Deterministic number formatting: 12 significant digits, '.' decimal,
// no locale dependence. NaN maps to null, infinities to the strings
// "inf"/"-inf" (the +inf sentinel of kappa_P).
inline std::string format_number(double v) {
    if (std::isnan(v)) return "null";
    if (std::isinf(v)) return v > 0 ? "\"inf\"" : "\"-inf\"";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

// Minimal streaming JSON writer with caller-controlled field order.
class JsonWriter {
public:
    JsonWriter& begin_object() {
        sep();
        out_ << '{';
        fresh_ = true;
        return *this;
    }
    JsonWriter& end_object() {
        out_ << '}';
        fresh_ = false;
        return *this;
    }
    JsonWriter& begin_array() {
        sep();
        out_ << '[';
        fresh_ = true;
        return *this;
    }
    JsonWriter& end_array() {
        out_ << ']';
        fresh_ = false;
        return *this;
    }
    JsonWriter& key(const std::string& k) {
        sep();
        write_string(k);
        out_ << ':';
        fresh_ = true;
        return *this;
    }
    JsonWriter& value(double v) {
        sep();
        out_ << format_number(v);
        return *this;
    }
    JsonWriter& value(int v) {
        sep();
        out_ << v;
        return *this;
    }
    JsonWriter& value(bool v) {
        sep();
        out_ << (v ? "true" : "false");
        return *this;
    }
    JsonWriter& value(const std::string& v) {
        sep();
        write_string(v);
        return *this;
    }
    JsonWriter& value(const char* v) { return value(std::string(v)); }
    JsonWriter& null_value() {
        sep();
        out_ << "null";
        return *this;
    }

    template <typename T>
    JsonWriter& field(const std::string& k, const T& v) {
        key(k);
        value(v);
        return *this;
    }

    std::string str() const { return out_.str() + "\n"; }

private:
    void sep() {
        if (!fresh_) out_ << ',';
        fresh_ = false;
    }
    void write_string(const std::string& s) {
        out_ << '"';
        for (char c : s) {
            switch (c) {
                case '"': out_ << "\\\""; break;
                case '\\': out_ << "\\\\"; break;
                case '\n': out_ << "\\n"; break;
                case '\t': out_ << "\\t"; break;
                default: out_ << c;
            }
        }
        out_ << '"';
    }
    std::ostringstream out_;
    bool fresh_ = true;
};

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw domain_error("cannot open output file: " + path);
    f << content;
}

// Single header row, comma separated, 12-significant-digit floats.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {
        for (std::size_t i = 0; i < header_.size(); ++i) {
            if (i) out_ << ',';
            out_ << header_[i];
        }
        out_ << '\n';
    }
    void row(const std::vector<double>& vals) {
        if (vals.size() != header_.size()) throw domain_error("CsvWriter: column mismatch");
        for (std::size_t i = 0; i < vals.size(); ++i) {
            if (i) out_ << ',';
            out_ << format_number(vals[i]);
        }
        out_ << '\n';
    }
    std::string str() const { return out_.str(); }

private:
    std::vector<std::string> header_;
    std::ostringstream out_;
};

}  // namespace kmfg
