#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "nlselect/simulation.hpp"
#include "nlselect/types.hpp"

namespace nlselect::io {

struct IngestResult {
    Dataset dataset; // standardized
    std::vector<std::string> predictors;
    std::string response;
    Eigen::VectorXd x_mean;  // raw column means, predictor order
    Eigen::VectorXd x_scale; // raw column sds (n-1 convention)
    double y_mean = 0.0;
};

/* Read a plain comma-separated file with a header row.  Every column
 * must parse as a double; the named response column becomes y and
 * the remaining columns, in file order, become X.  The returned
 * dataset is standardized.
 */
IngestResult ingest_csv(const std::string& path,
                        const std::string& response_column);

/// Shortest round-trippable decimal form (up to 17 significant digits).
std::string format_double(double value);

void write_text_file(const std::string& path, const std::string& content);

std::string ratio_table_csv(const std::vector<simulation::RatioRow>& rows);
std::string metrics_table_csv(const std::vector<simulation::MetricRow>& rows);
std::string roc_table_csv(const std::vector<simulation::RocPoint>& points);

} // namespace nlselect::io
