// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <istream>
#include <string>
#include <vector>

#include "finsent/core.hpp"

namespace finsent {

/// One parsed CSV record plus the line it started on (1-based).
struct CsvRow {
    std::size_t line = 0;
    std::vector<std::string> fields;
};

/// Minimal RFC 4180 reader: quoted fields, doubled quotes, embedded
/// commas/newlines, CRLF. Throws ParseError with the offending line.
class CsvReader {
public:
    explicit CsvReader(std::istream& in) : in_(in) {}

    /// Reads the next record; false at end of input. Blank lines are skipped.
    bool next(CsvRow& row) {
        int ch = in_.get();
        // skip blank lines
        while (ch == '\n' || ch == '\r') {
            if (ch == '\n') ++line_;
            ch = in_.get();
        }
        if (ch == EOF) return false;

        row.line = line_;
        row.fields.clear();
        std::string field;
        bool quoted = false;
        bool done = false;
        while (!done) {
            if (quoted) {
                if (ch == EOF) throw ParseError(row.line, "unterminated quoted field");
                if (ch == '"') {
                    int peek = in_.get();
                    if (peek == '"') {
                        field.push_back('"');
                    } else {
                        quoted = false;
                        if (peek != EOF) in_.unget();  // eofbit already set otherwise
                    }
                } else {
                    if (ch == '\n') ++line_;
                    field.push_back(static_cast<char>(ch));
                }
            } else {
                switch (ch) {
                    case EOF:
                    case '\n':
                        if (ch == '\n') ++line_;
                        row.fields.push_back(std::move(field));
                        done = true;
                        break;
                    case '\r':
                        break;  // swallow; the '\n' ends the record
                    case ',':
                        row.fields.push_back(std::move(field));
                        field.clear();
                        break;
                    case '"':
                        if (!field.empty())
                            throw ParseError(line_, "quote inside unquoted field");
                        quoted = true;
                        break;
                    default:
                        field.push_back(static_cast<char>(ch));
                }
            }
            if (!done) ch = in_.get();
        }
        return true;
    }

private:
    std::istream& in_;
    std::size_t line_ = 1;
};

}  // namespace finsent
