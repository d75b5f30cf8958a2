#include "dropkit/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace dropkit {

void Dataset::validate() const {
    if (features.rows() < 1 || features.cols() < 1)
        raise(Errc::bad_config, "dataset requires n >= 1 and d >= 1");
    if (labels.size() != features.rows())
        raise(Errc::dimension_mismatch, "labels/features row count mismatch");
    if (!features.allFinite())
        raise(Errc::bad_config, "dataset contains non-finite feature entries");
    for (Eigen::Index i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0.0 && labels[i] != 1.0)
            raise(Errc::bad_config, "labels must be exactly 0 or 1");
    }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

double parse_real(const std::string& text, const std::string& path, std::size_t lineno) {
    try {
        std::size_t used = 0;
        const double value = std::stod(text, &used);
        while (used < text.size() && std::isspace(static_cast<unsigned char>(text[used]))) ++used;
        if (used != text.size()) throw std::invalid_argument(text);
        return value;
    } catch (const std::exception&) {
        raise(Errc::io_failure,
              path + ":" + std::to_string(lineno) + ": cannot parse '" + text + "' as a real");
    }
}

} // namespace

Dataset read_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(Errc::io_failure, "cannot open dataset file: " + path);

    std::string line;
    if (!std::getline(in, line)) raise(Errc::io_failure, path + ": empty file");
    const auto header = split_csv_line(line);
    if (header.empty() || header[0] != "y")
        raise(Errc::io_failure, path + ": expected header y,x1,...,xd");
    const Eigen::Index d = static_cast<Eigen::Index>(header.size()) - 1;
    if (d < 1) raise(Errc::io_failure, path + ": no feature columns");

    std::vector<double> labels;
    std::vector<double> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (static_cast<Eigen::Index>(fields.size()) != d + 1)
            raise(Errc::io_failure,
                  path + ":" + std::to_string(lineno) + ": expected " +
                      std::to_string(d + 1) + " fields, got " + std::to_string(fields.size()));
        double y = parse_real(fields[0], path, lineno);
        if (y == -1.0) y = 0.0; // accept +-1 labels
        if (y != 0.0 && y != 1.0)
            raise(Errc::io_failure,
                  path + ":" + std::to_string(lineno) + ": label must be 0/1 or +-1");
        labels.push_back(y);
        for (Eigen::Index j = 0; j < d; ++j)
            rows.push_back(parse_real(fields[static_cast<std::size_t>(j) + 1], path, lineno));
    }
    const Eigen::Index n = static_cast<Eigen::Index>(labels.size());
    if (n < 1) raise(Errc::io_failure, path + ": no samples");

    Dataset data;
    data.features.resize(n, d);
    data.labels.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        data.labels[i] = labels[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < d; ++j)
            data.features(i, j) = rows[static_cast<std::size_t>(i * d + j)];
    }
    data.validate();
    return data;
}

void write_dataset_csv(const Dataset& data, const std::string& path) {
    data.validate();
    std::ofstream out(path);
    if (!out) raise(Errc::io_failure, "cannot write dataset file: " + path);
    out << "y";
    for (Eigen::Index j = 0; j < data.d(); ++j) out << ",x" << (j + 1);
    out << "\n";
    char buf[64];
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        out << static_cast<int>(data.labels[i]);
        for (Eigen::Index j = 0; j < data.d(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", data.features(i, j));
            out << ',' << buf;
        }
        out << "\n";
    }
    if (!out) raise(Errc::io_failure, "write failed: " + path);
}

} // namespace dropkit
