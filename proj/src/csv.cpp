#include "nlselect/csv.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace nlselect::io {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    fields.push_back(field);
    return fields;
}

double parse_cell(const std::string& cell, std::size_t row,
                  const std::string& column) {
    if (cell.empty()) {
        throw MalformedCsv("row " + std::to_string(row) + ", column '" +
                           column + "': empty field");
    }
    const char* begin = cell.c_str();
    char* end = nullptr;
    const double value = std::strtod(begin, &end);
    if (end != begin + cell.size() || !std::isfinite(value)) {
        throw MalformedCsv("row " + std::to_string(row) + ", column '" +
                           column + "': cannot parse '" + cell + "'");
    }
    return value;
}

} // namespace

IngestResult ingest_csv(const std::string& path,
                        const std::string& response_column) {
    std::ifstream in(path);
    if (!in) throw MalformedCsv("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) {
        throw MalformedCsv("'" + path + "' is empty");
    }
    const std::vector<std::string> header = split_fields(line);
    if (header.size() < 2) {
        throw MalformedCsv("need a response and at least one predictor");
    }
    int response_at = -1;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i].empty()) {
            throw MalformedCsv("header field " + std::to_string(i + 1) +
                               " is empty");
        }
        if (header[i] == response_column) {
            response_at = static_cast<int>(i);
        }
    }
    if (response_at < 0) {
        throw MissingColumn("response column '" + response_column +
                            "' not found");
    }

    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const std::vector<std::string> fields = split_fields(line);
        if (fields.size() != header.size()) {
            throw MalformedCsv("row " + std::to_string(line_no) + " has " +
                               std::to_string(fields.size()) +
                               " fields, expected " +
                               std::to_string(header.size()));
        }
        std::vector<double> parsed(fields.size());
        for (std::size_t i = 0; i < fields.size(); ++i) {
            parsed[i] = parse_cell(fields[i], line_no, header[i]);
        }
        rows.push_back(std::move(parsed));
    }
    const int n = static_cast<int>(rows.size());
    const int p = static_cast<int>(header.size()) - 1;
    if (n < 2) throw MalformedCsv("need at least 2 data rows");

    IngestResult result;
    result.response = response_column;
    Eigen::MatrixXd X(n, p);
    Eigen::VectorXd y(n);
    int at = 0;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (static_cast<int>(c) == response_at) continue;
        result.predictors.push_back(header[c]);
        for (int i = 0; i < n; ++i) X(i, at) = rows[i][c];
        ++at;
    }
    for (int i = 0; i < n; ++i) y[i] = rows[i][response_at];

    result.x_mean.resize(p);
    result.x_scale.resize(p);
    for (int j = 0; j < p; ++j) {
        result.x_mean[j] = X.col(j).mean();
        const double ss =
            (X.col(j).array() - result.x_mean[j]).square().sum();
        result.x_scale[j] = std::sqrt(ss / (n - 1));
        if (!(result.x_scale[j] > 0.0)) {
            throw ZeroVarianceColumn("column '" + result.predictors[j] +
                                     "' has zero variance");
        }
    }
    result.y_mean = y.mean();
    result.dataset = standardize(std::move(X), std::move(y));
    return result;
}

std::string format_double(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[64];
    for (int precision = 1; precision <= 17; ++precision) {
        std::snprintf(buf, sizeof(buf), "%.*g", precision, value);
        if (std::strtod(buf, nullptr) == value) break;
    }
    return buf;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << content;
    if (!out) throw Error("failed writing '" + path + "'");
}

std::string ratio_table_csv(const std::vector<simulation::RatioRow>& rows) {
    std::string out = "p,scenario,design,mean_log_ratio,stderr\n";
    for (const auto& row : rows) {
        out += std::to_string(row.p) + "," + std::to_string(row.scenario) +
               "," + simulation::design_name(row.design) + "," +
               format_double(row.mean_log_ratio) + "," +
               format_double(row.std_error) + "\n";
    }
    return out;
}

std::string metrics_table_csv(const std::vector<simulation::MetricRow>& rows) {
    std::string out = "p,design,pattern,method,ppv,tpr,fpr\n";
    for (const auto& row : rows) {
        out += std::to_string(row.p) + "," +
               simulation::design_name(row.design) + "," +
               simulation::pattern_name(row.pattern) + "," +
               simulation::method_name(row.method) + "," +
               format_double(row.metrics.ppv) + "," +
               format_double(row.metrics.tpr) + "," +
               format_double(row.metrics.fpr) + "\n";
    }
    return out;
}

std::string roc_table_csv(const std::vector<simulation::RocPoint>& points) {
    std::string out = "threshold,fpr,tpr\n";
    for (const auto& point : points) {
        out += format_double(point.threshold) + "," +
               format_double(point.fpr) + "," + format_double(point.tpr) +
               "\n";
    }
    return out;
}

} // namespace nlselect::io
