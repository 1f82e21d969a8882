#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "nre/errors.hpp"
#include "nre/matrix.hpp"
#include "nre/tasks.hpp"

namespace nre {

namespace csv {

inline std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    return fields;
}

inline double parse_double(const std::string& s) {
    try {
        return std::stod(s);
    } catch (const std::exception&) {
        throw IoError("csv: cannot parse number from '" + s + "'");
    }
}

}  // namespace csv

inline void write_matrix_csv(const std::string& path, const std::vector<std::string>& header,
                             const Matrix& m) {
    if (header.size() != m.cols()) throw ShapeError("write_matrix_csv: header width mismatch");
    std::ofstream out(path);
    if (!out) throw IoError("write_matrix_csv: cannot open " + path);
    for (std::size_t j = 0; j < header.size(); ++j)
        out << header[j] << (j + 1 < header.size() ? "," : "\n");
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto r = m.row(i);
        for (std::size_t j = 0; j < m.cols(); ++j)
            out << csv::format_double(r[j]) << (j + 1 < m.cols() ? "," : "\n");
    }
    if (!out) throw IoError("write_matrix_csv: write to " + path + " failed");
}

struct CsvTable {
    std::vector<std::string> header;
    Matrix values;
};

inline CsvTable read_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("read_matrix_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw IoError("read_matrix_csv: empty file " + path);
    CsvTable table;
    table.header = csv::split_line(line);
    std::vector<double> data;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto fields = csv::split_line(line);
        if (fields.size() != table.header.size())
            throw IoError("read_matrix_csv: ragged row in " + path);
        for (const auto& f : fields) data.push_back(csv::parse_double(f));
        ++rows;
    }
    table.values = Matrix(rows, table.header.size(), std::move(data));
    return table;
}

/// Columnar joint-sample file with header theta_0..theta_{d-1}, x_0..x_{d-1}.
inline void write_joint_csv(const std::string& path, const JointBatch& batch) {
    std::vector<std::string> header;
    for (std::size_t j = 0; j < batch.theta.cols(); ++j)
        header.push_back("theta_" + std::to_string(j));
    for (std::size_t j = 0; j < batch.x.cols(); ++j) header.push_back("x_" + std::to_string(j));
    write_matrix_csv(path, header, hcat(batch.theta, batch.x));
}

inline JointBatch read_joint_csv(const std::string& path) {
    CsvTable table = read_matrix_csv(path);
    std::size_t dim_theta = 0;
    while (dim_theta < table.header.size() &&
           table.header[dim_theta].rfind("theta_", 0) == 0)
        ++dim_theta;
    if (dim_theta == 0 || dim_theta == table.header.size())
        throw IoError("read_joint_csv: header must be theta_0..,x_0.. in " + path);
    JointBatch batch;
    batch.theta = Matrix(table.values.rows(), dim_theta);
    batch.x = Matrix(table.values.rows(), table.header.size() - dim_theta);
    for (std::size_t i = 0; i < table.values.rows(); ++i) {
        auto src = table.values.row(i);
        std::copy(src.begin(), src.begin() + dim_theta, batch.theta.row(i).begin());
        std::copy(src.begin() + dim_theta, src.end(), batch.x.row(i).begin());
    }
    return batch;
}

/// Per-epoch training log.
inline void write_train_log_csv(const std::string& path, const std::vector<double>& train_loss,
                                const std::vector<double>& val_loss,
                                const std::vector<double>& neg_mi0) {
    std::ofstream out(path);
    if (!out) throw IoError("write_train_log_csv: cannot open " + path);
    out << "epoch,train_loss,val_loss,neg_mi0\n";
    for (std::size_t e = 0; e < train_loss.size(); ++e)
        out << e << "," << csv::format_double(train_loss[e]) << ","
            << csv::format_double(val_loss[e]) << "," << csv::format_double(neg_mi0[e]) << "\n";
}

}  // namespace nre
