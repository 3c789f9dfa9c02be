// Regenerates the bundled synthetic benchmark CSVs and their schema files.
//
//   make_synth <output-dir>                  writes blood_synth and credit_synth
//   make_synth adult <n-rows> <csv> <schema> writes an income-census-style table

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <delta/csv.hpp>
#include <delta/schema.hpp>
#include <delta/synth.hpp>

namespace {

void write_table(const delta::GeneratedTable& table, const std::string& csv_path,
                 const std::string& schema_path) {
    std::ofstream csv(csv_path);
    if (!csv) throw std::runtime_error("cannot open " + csv_path + " for writing");
    delta::write_csv_records(csv, table.records());
    delta::save_schema(table.schema, schema_path);
    std::cout << csv_path << ": " << table.rows.size() << " rows\n";
}

}  // namespace

int main(int argc, char** argv) {
    try {
        if (argc == 2) {
            const std::filesystem::path dir = argv[1];
            std::filesystem::create_directories(dir);
            write_table(delta::make_blood_like(), (dir / "blood_synth.csv").string(),
                        (dir / "blood_synth.schema.json").string());
            write_table(delta::make_credit_like(), (dir / "credit_synth.csv").string(),
                        (dir / "credit_synth.schema.json").string());
            return 0;
        }
        if (argc == 5 && std::string(argv[1]) == "adult") {
            const std::size_t n = std::stoul(argv[2]);
            write_table(delta::make_adult_like(n), argv[3], argv[4]);
            return 0;
        }
        std::cerr << "usage: make_synth <output-dir>\n"
                     "       make_synth adult <n-rows> <csv-path> <schema-path>\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "make_synth: " << e.what() << "\n";
        return 1;
    }
}
