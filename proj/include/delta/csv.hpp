#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "delta/error.hpp"

namespace delta {

/// Minimal RFC 4180 reader: quoted fields, doubled-quote escapes, CRLF or LF
/// line endings.  Returns one vector of cells per record.
inline std::vector<std::vector<std::string>> read_csv_records(std::istream& in,
                                                              const std::string& origin) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string cell;
    bool in_quotes = false;
    bool cell_started = false;
    bool record_started = false;
    std::size_t line = 1;

    auto end_cell = [&]() {
        record.push_back(cell);
        cell.clear();
        cell_started = false;
    };
    auto end_record = [&]() {
        end_cell();
        records.push_back(record);
        record.clear();
        record_started = false;
    };

    char ch;
    while (in.get(ch)) {
        if (in_quotes) {
            if (ch == '"') {
                if (in.peek() == '"') {
                    in.get(ch);
                    cell.push_back('"');
                } else {
                    in_quotes = false;
                }
            } else {
                if (ch == '\n') ++line;
                cell.push_back(ch);
            }
            continue;
        }
        switch (ch) {
            case '"':
                if (cell_started && !cell.empty())
                    throw DataError(origin + ":" + std::to_string(line) +
                                    ": stray quote inside unquoted cell");
                in_quotes = true;
                cell_started = true;
                record_started = true;
                break;
            case ',':
                end_cell();
                record_started = true;
                break;
            case '\r':
                break;  // handled by the following '\n'
            case '\n':
                if (record_started || cell_started || !record.empty()) end_record();
                ++line;
                break;
            default:
                cell.push_back(ch);
                cell_started = true;
                record_started = true;
                break;
        }
    }
    if (in_quotes) throw DataError(origin + ": unterminated quoted cell at end of input");
    if (record_started || cell_started || !record.empty()) end_record();
    return records;
}

inline std::vector<std::vector<std::string>> read_csv_records(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open csv file: " + path);
    return read_csv_records(in, path);
}

/// Writes records using RFC 4180 quoting (only where needed).
inline void write_csv_records(std::ostream& out,
                              const std::vector<std::vector<std::string>>& records) {
    for (const auto& record : records) {
        for (std::size_t i = 0; i < record.size(); ++i) {
            const std::string& cell = record[i];
            bool quote = cell.find_first_of(",\"\n\r") != std::string::npos;
            if (i) out << ',';
            if (quote) {
                out << '"';
                for (char c : cell) {
                    if (c == '"') out << "\"\"";
                    else out << c;
                }
                out << '"';
            } else {
                out << cell;
            }
        }
        out << "\n";
    }
}

}  // namespace delta
